#include "convmfit/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace convmfit {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<EMat<T>>;
template <typename T>
using CMap = Eigen::Map<const EMat<T>>;

template <typename T>
Map<T> map(Tensor<T>& t) {
  return Map<T>(t.data.data(), t.rows(), t.cols());
}
template <typename T>
CMap<T> cmap(const Tensor<T>& t) {
  return CMap<T>(t.data.data(), t.rows(), t.cols());
}
template <typename T>
Map<T> gmap(Tensor<T>& t) {
  return Map<T>(t.grad.data(), t.rows(), t.cols());
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape != b.shape) {
    std::ostringstream os;
    os << op << ": shape mismatch [" << a.rows() << "x" << a.cols() << "] vs ["
       << b.rows() << "x" << b.cols() << "]";
    throw ShapeError(os.str());
  }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape s, bool req_grad) : shape(std::move(s)), requires_grad(req_grad) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("tensor extents must be positive");
    n *= d;
  }
  if (shape.empty()) n = 0;
  data.assign(static_cast<size_t>(n), T(0));
  if (requires_grad) grad.assign(static_cast<size_t>(n), T(0));
}

template <typename T>
TensorPtr<T> Tensor<T>::make(Shape s, bool req_grad) {
  return std::make_shared<Tensor<T>>(std::move(s), req_grad);
}

template <typename T>
TensorPtr<T> Tensor<T>::scalar(T value) {
  auto t = make({1, 1});
  t->data[0] = value;
  return t;
}

template <typename T>
TensorPtr<T> Tensor<T>::from(Shape s, std::vector<T> values, bool req_grad) {
  auto t = make(std::move(s), req_grad);
  if (values.size() != t->data.size()) throw ShapeError("from: value count does not match shape");
  t->data = std::move(values);
  return t;
}

template <typename T>
int64_t Tensor<T>::numel() const {
  return static_cast<int64_t>(data.size());
}

template <typename T>
void Tensor<T>::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), T(0));
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on a non-scalar tensor");
  return data[0];
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// ---- Graph -----------------------------------------------------------------

template <typename T>
void Graph<T>::track(const TensorPtr<T>& out, const char* op_name) {
  out->ensure_grad();
  if (check_finite_ && !out->all_finite()) {
    throw NumericError(std::string("non-finite values in output of ") + op_name);
  }
}

template <typename T>
void Graph<T>::push_backward(std::function<void()> fn) {
  tape_.push_back(std::move(fn));
}

template <typename T>
void Graph<T>::backward(const TensorPtr<T>& loss) {
  if (loss->numel() != 1) throw ShapeError("backward: loss must be a scalar");
  if (!loss->has_grad()) throw ShapeError("backward: loss is not tracked on this graph");
  loss->grad[0] = T(1);
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

template <typename T>
void Graph<T>::clear() {
  tape_.clear();
}

// ---- ops -------------------------------------------------------------------

template <typename T>
TensorPtr<T> matmul(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->cols() != b->rows()) {
    std::ostringstream os;
    os << "matmul: inner dimensions disagree, [" << a->rows() << "x" << a->cols()
       << "] * [" << b->rows() << "x" << b->cols() << "]";
    throw ShapeError(os.str());
  }
  auto out = Tensor<T>::make({a->rows(), b->cols()});
  map(*out).noalias() = cmap(*a) * cmap(*b);
  if (g.recording()) {
    g.track(out, "matmul");
    g.push_backward([a, b, out] {
      if (a->has_grad()) gmap(*a).noalias() += gmap(*out) * cmap(*b).transpose();
      if (b->has_grad()) gmap(*b).noalias() += cmap(*a).transpose() * gmap(*out);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> matmul_nt(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->cols() != b->cols()) {
    std::ostringstream os;
    os << "matmul_nt: inner dimensions disagree, [" << a->rows() << "x" << a->cols()
       << "] * [" << b->rows() << "x" << b->cols() << "]^T";
    throw ShapeError(os.str());
  }
  auto out = Tensor<T>::make({a->rows(), b->rows()});
  map(*out).noalias() = cmap(*a) * cmap(*b).transpose();
  if (g.recording()) {
    g.track(out, "matmul_nt");
    g.push_backward([a, b, out] {
      if (a->has_grad()) gmap(*a).noalias() += gmap(*out) * cmap(*b);
      if (b->has_grad()) gmap(*b).noalias() += gmap(*out).transpose() * cmap(*a);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> add(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(*a, *b, "add");
  auto out = Tensor<T>::make(a->shape);
  map(*out) = cmap(*a) + cmap(*b);
  if (g.recording()) {
    g.track(out, "add");
    g.push_backward([a, b, out] {
      if (a->has_grad()) gmap(*a) += gmap(*out);
      if (b->has_grad()) gmap(*b) += gmap(*out);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> sub(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(*a, *b, "sub");
  auto out = Tensor<T>::make(a->shape);
  map(*out) = cmap(*a) - cmap(*b);
  if (g.recording()) {
    g.track(out, "sub");
    g.push_backward([a, b, out] {
      if (a->has_grad()) gmap(*a) += gmap(*out);
      if (b->has_grad()) gmap(*b) -= gmap(*out);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mul(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(*a, *b, "mul");
  auto out = Tensor<T>::make(a->shape);
  map(*out) = cmap(*a).cwiseProduct(cmap(*b));
  if (g.recording()) {
    g.track(out, "mul");
    g.push_backward([a, b, out] {
      if (a->has_grad()) gmap(*a) += gmap(*out).cwiseProduct(cmap(*b));
      if (b->has_grad()) gmap(*b) += gmap(*out).cwiseProduct(cmap(*a));
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> add_rowvec(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& bias) {
  if (bias->rows() != 1 || bias->cols() != a->cols()) {
    throw ShapeError("add_rowvec: bias must be [1 x cols(a)]");
  }
  auto out = Tensor<T>::make(a->shape);
  map(*out) = cmap(*a).rowwise() + cmap(*bias).row(0);
  if (g.recording()) {
    g.track(out, "add_rowvec");
    g.push_backward([a, bias, out] {
      if (a->has_grad()) gmap(*a) += gmap(*out);
      if (bias->has_grad()) gmap(*bias).row(0) += gmap(*out).colwise().sum();
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> scale(Graph<T>& g, const TensorPtr<T>& a, T factor) {
  auto out = Tensor<T>::make(a->shape);
  map(*out) = cmap(*a) * factor;
  if (g.recording()) {
    g.track(out, "scale");
    g.push_backward([a, out, factor] {
      if (a->has_grad()) gmap(*a) += gmap(*out) * factor;
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> sigmoid(Graph<T>& g, const TensorPtr<T>& a) {
  auto out = Tensor<T>::make(a->shape);
  map(*out) = ((-cmap(*a).array()).exp() + T(1)).inverse().matrix();
  if (g.recording()) {
    g.track(out, "sigmoid");
    g.push_backward([a, out] {
      if (!a->has_grad()) return;
      auto y = cmap(*out).array();
      gmap(*a).array() += gmap(*out).array() * y * (T(1) - y);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> tanh_op(Graph<T>& g, const TensorPtr<T>& a) {
  auto out = Tensor<T>::make(a->shape);
  map(*out) = cmap(*a).array().tanh().matrix();
  if (g.recording()) {
    g.track(out, "tanh");
    g.push_backward([a, out] {
      if (!a->has_grad()) return;
      auto y = cmap(*out).array();
      gmap(*a).array() += gmap(*out).array() * (T(1) - y * y);
    });
  }
  return out;
}

namespace {

// shared forward/backward for (masked) row softmax; mask == nullptr means all
// entries participate
template <typename T>
TensorPtr<T> softmax_impl(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& mask,
                          const char* op_name) {
  if (a->cols() < 1) throw ShapeError("softmax: last axis must have length >= 1");
  if (mask) require_same_shape(*a, *mask, "masked_softmax");
  auto out = Tensor<T>::make(a->shape);
  const int64_t rows = a->rows(), cols = a->cols();
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = a->data.data() + r * cols;
    const T* m = mask ? mask->data.data() + r * cols : nullptr;
    T* y = out->data.data() + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t j = 0; j < cols; ++j)
      if (!m || m[j] != T(0)) mx = std::max(mx, x[j]);
    if (mx == -std::numeric_limits<T>::infinity()) {
      throw ShapeError("masked_softmax: a row has no unmasked entries");
    }
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      if (!m || m[j] != T(0)) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
      } else {
        y[j] = T(0);
      }
    }
    for (int64_t j = 0; j < cols; ++j) y[j] /= sum;
  }
  if (g.recording()) {
    g.track(out, op_name);
    g.push_backward([a, out] {
      if (!a->has_grad()) return;
      const int64_t rows = a->rows(), cols = a->cols();
      for (int64_t r = 0; r < rows; ++r) {
        const T* y = out->data.data() + r * cols;
        const T* dy = out->grad.data() + r * cols;
        T* dx = a->grad.data() + r * cols;
        T dot = T(0);
        for (int64_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
        for (int64_t j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
TensorPtr<T> softmax_rows(Graph<T>& g, const TensorPtr<T>& a) {
  return softmax_impl<T>(g, a, nullptr, "softmax");
}

template <typename T>
TensorPtr<T> masked_softmax_rows(Graph<T>& g, const TensorPtr<T>& a,
                                 const TensorPtr<T>& mask) {
  return softmax_impl<T>(g, a, mask, "masked_softmax");
}

template <typename T>
TensorPtr<T> activation(Graph<T>& g, const TensorPtr<T>& a, Activation fn) {
  switch (fn) {
    case Activation::kSigmoid: return sigmoid(g, a);
    case Activation::kTanh: return tanh_op(g, a);
    case Activation::kSoftmaxLastAxis: return softmax_rows(g, a);
  }
  throw ConfigError("unknown activation");
}

template <typename T>
TensorPtr<T> embedding_rows(Graph<T>& g, const TensorPtr<T>& table,
                            const std::vector<int64_t>& ids,
                            const std::vector<T>* row_scale) {
  const int64_t v = table->rows(), d = table->cols();
  if (row_scale && static_cast<int64_t>(row_scale->size()) != v) {
    throw ShapeError("embedding_rows: row_scale size must equal vocab size");
  }
  auto out = Tensor<T>::make({static_cast<int64_t>(ids.size()), d});
  for (size_t r = 0; r < ids.size(); ++r) {
    int64_t id = ids[r];
    if (id < 0 || id >= v) throw ShapeError("embedding_rows: id out of range");
    const T s = row_scale ? (*row_scale)[id] : T(1);
    const T* src = table->data.data() + id * d;
    T* dst = out->data.data() + r * d;
    for (int64_t j = 0; j < d; ++j) dst[j] = s * src[j];
  }
  if (g.recording()) {
    g.track(out, "embedding_rows");
    std::vector<T> scales;
    if (row_scale) scales = *row_scale;
    g.push_backward([table, out, ids, scales = std::move(scales)] {
      if (!table->has_grad()) return;
      const int64_t d = table->cols();
      for (size_t r = 0; r < ids.size(); ++r) {
        const T s = scales.empty() ? T(1) : scales[ids[r]];
        const T* dy = out->grad.data() + r * d;
        T* dst = table->grad.data() + ids[r] * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += s * dy[j];
      }
    });
  }
  return out;
}

template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> lstm_cell(
    Graph<T>& g, const TensorPtr<T>& x, const TensorPtr<T>& h,
    const TensorPtr<T>& c, const TensorPtr<T>& w_ih, const TensorPtr<T>& w_hh,
    const TensorPtr<T>& bias, const TensorPtr<T>& step_mask) {
  const int64_t batch = x->rows();
  const int64_t hidden = h->cols();
  if (w_ih->rows() != x->cols() || w_ih->cols() != 4 * hidden ||
      w_hh->rows() != hidden || w_hh->cols() != 4 * hidden ||
      bias->rows() != 1 || bias->cols() != 4 * hidden ||
      h->rows() != batch || c->rows() != batch || c->cols() != hidden) {
    throw ShapeError("lstm_cell: inconsistent parameter shapes");
  }
  if (step_mask && (step_mask->rows() != batch || step_mask->cols() != 1)) {
    throw ShapeError("lstm_cell: step_mask must be [batch x 1]");
  }

  // pre-activations, then gates (i, f, g, o)
  auto gates = std::make_shared<Tensor<T>>(Shape{batch, 4 * hidden});
  map(*gates).noalias() = cmap(*x) * cmap(*w_ih);
  map(*gates).noalias() += cmap(*h) * cmap(*w_hh);
  map(*gates) = map(*gates).rowwise() + cmap(*bias).row(0);

  auto h_out = Tensor<T>::make({batch, hidden});
  auto c_out = Tensor<T>::make({batch, hidden});
  auto tanh_c = std::make_shared<std::vector<T>>(batch * hidden);

  for (int64_t b = 0; b < batch; ++b) {
    T* gt = gates->data.data() + b * 4 * hidden;
    const T m = step_mask ? step_mask->data[b] : T(1);
    const T* cp = c->data.data() + b * hidden;
    const T* hp = h->data.data() + b * hidden;
    T* co = c_out->data.data() + b * hidden;
    T* ho = h_out->data.data() + b * hidden;
    T* tc = tanh_c->data() + b * hidden;
    for (int64_t j = 0; j < hidden; ++j) {
      T ig = T(1) / (T(1) + std::exp(-gt[j]));
      T fg = T(1) / (T(1) + std::exp(-gt[hidden + j]));
      T gg = std::tanh(gt[2 * hidden + j]);
      T og = T(1) / (T(1) + std::exp(-gt[3 * hidden + j]));
      // overwrite pre-activations with gate values for the backward pass
      gt[j] = ig;
      gt[hidden + j] = fg;
      gt[2 * hidden + j] = gg;
      gt[3 * hidden + j] = og;
      T cn = fg * cp[j] + ig * gg;
      T tn = std::tanh(cn);
      T hn = og * tn;
      tc[j] = tn;
      co[j] = m * cn + (T(1) - m) * cp[j];
      ho[j] = m * hn + (T(1) - m) * hp[j];
    }
  }

  if (g.recording()) {
    g.track(h_out, "lstm_cell");
    g.track(c_out, "lstm_cell");
    g.push_backward([x, h, c, w_ih, w_hh, bias, step_mask, gates, h_out, c_out, tanh_c] {
      const int64_t batch = x->rows();
      const int64_t hidden = h->cols();
      EMat<T> d_pre(batch, 4 * hidden);
      for (int64_t b = 0; b < batch; ++b) {
        const T m = step_mask ? step_mask->data[b] : T(1);
        const T* gt = gates->data.data() + b * 4 * hidden;
        const T* tc = tanh_c->data() + b * hidden;
        const T* cp = c->data.data() + b * hidden;
        const T* dho = h_out->grad.data() + b * hidden;
        const T* dco = c_out->grad.data() + b * hidden;
        T* dp = d_pre.data() + b * 4 * hidden;
        T* dhp = h->has_grad() ? h->grad.data() + b * hidden : nullptr;
        T* dcp = c->has_grad() ? c->grad.data() + b * hidden : nullptr;
        for (int64_t j = 0; j < hidden; ++j) {
          const T ig = gt[j], fg = gt[hidden + j], gg = gt[2 * hidden + j],
                  og = gt[3 * hidden + j];
          const T dhn = dho[j] * m;
          T dcn = dco[j] * m;
          if (dhp) dhp[j] += dho[j] * (T(1) - m);
          const T dog = dhn * tc[j];
          dcn += dhn * og * (T(1) - tc[j] * tc[j]);
          const T dfg = dcn * cp[j];
          const T dig = dcn * gg;
          const T dgg = dcn * ig;
          if (dcp) dcp[j] += dcn * fg + dco[j] * (T(1) - m);
          dp[j] = dig * ig * (T(1) - ig);
          dp[hidden + j] = dfg * fg * (T(1) - fg);
          dp[2 * hidden + j] = dgg * (T(1) - gg * gg);
          dp[3 * hidden + j] = dog * og * (T(1) - og);
        }
      }
      if (x->has_grad()) gmap(*x).noalias() += d_pre * cmap(*w_ih).transpose();
      if (h->has_grad()) gmap(*h).noalias() += d_pre * cmap(*w_hh).transpose();
      if (w_ih->has_grad()) gmap(*w_ih).noalias() += cmap(*x).transpose() * d_pre;
      if (w_hh->has_grad()) gmap(*w_hh).noalias() += cmap(*h).transpose() * d_pre;
      if (bias->has_grad()) gmap(*bias).row(0) += d_pre.colwise().sum();
    });
  }
  return {h_out, c_out};
}

template <typename T>
TensorPtr<T> concat_rows(Graph<T>& g, const std::vector<TensorPtr<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty input list");
  const int64_t cols = parts[0]->cols();
  int64_t rows = 0;
  for (const auto& p : parts) {
    if (p->cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p->rows();
  }
  auto out = Tensor<T>::make({rows, cols});
  int64_t at = 0;
  for (const auto& p : parts) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + at * cols);
    at += p->rows();
  }
  if (g.recording()) {
    g.track(out, "concat_rows");
    g.push_backward([parts, out] {
      const int64_t cols = out->cols();
      int64_t at = 0;
      for (const auto& p : parts) {
        if (p->has_grad()) {
          const T* src = out->grad.data() + at * cols;
          T* dst = p->grad.data();
          const int64_t n = p->numel();
          for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
        }
        at += p->rows();
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> concat_cols(Graph<T>& g, const std::vector<TensorPtr<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input list");
  const int64_t rows = parts[0]->rows();
  int64_t cols = 0;
  for (const auto& p : parts) {
    if (p->rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p->cols();
  }
  auto out = Tensor<T>::make({rows, cols});
  int64_t at = 0;
  for (const auto& p : parts) {
    map(*out).middleCols(at, p->cols()) = cmap(*p);
    at += p->cols();
  }
  if (g.recording()) {
    g.track(out, "concat_cols");
    g.push_backward([parts, out] {
      int64_t at = 0;
      for (const auto& p : parts) {
        if (p->has_grad()) gmap(*p) += gmap(*out).middleCols(at, p->cols());
        at += p->cols();
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> sum_all(Graph<T>& g, const TensorPtr<T>& a) {
  auto out = Tensor<T>::scalar(cmap(*a).sum());
  if (g.recording()) {
    g.track(out, "sum_all");
    g.push_backward([a, out] {
      if (a->has_grad()) gmap(*a).array() += out->grad[0];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mean_all(Graph<T>& g, const TensorPtr<T>& a) {
  const T inv = T(1) / static_cast<T>(a->numel());
  auto out = Tensor<T>::scalar(cmap(*a).sum() * inv);
  if (g.recording()) {
    g.track(out, "mean_all");
    g.push_backward([a, out, inv] {
      if (a->has_grad()) gmap(*a).array() += out->grad[0] * inv;
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> bce_loss(Graph<T>& g, const TensorPtr<T>& p, const TensorPtr<T>& y) {
  require_same_shape(*p, *y, "bce_loss");
  constexpr T lo = T(1e-12), hi = T(1) - T(1e-12);
  const int64_t n = p->numel();
  T total = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T pc = std::clamp(p->data[i], lo, hi);
    const T yi = y->data[i];
    total += -(yi * std::log(pc) + (T(1) - yi) * std::log(T(1) - pc));
  }
  auto out = Tensor<T>::scalar(total / static_cast<T>(n));
  if (g.recording()) {
    g.track(out, "bce_loss");
    g.push_backward([p, y, out, n] {
      if (!p->has_grad()) return;
      const T d = out->grad[0] / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i) {
        const T pi = p->data[i];
        if (pi <= lo || pi >= hi) continue;  // clamp region: zero derivative
        p->grad[i] += d * (pi - y->data[i]) / (pi * (T(1) - pi));
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> ce_loss_masked(Graph<T>& g, const TensorPtr<T>& logits,
                            const std::vector<int64_t>& targets,
                            const std::vector<T>& mask) {
  const int64_t rows = logits->rows(), v = logits->cols();
  if (static_cast<int64_t>(targets.size()) != rows ||
      static_cast<int64_t>(mask.size()) != rows) {
    throw ShapeError("ce_loss_masked: targets/mask length must equal logit rows");
  }
  int64_t count = 0;
  for (T m : mask)
    if (m != T(0)) ++count;
  if (count == 0) throw ShapeError("ce_loss_masked: empty loss (all positions masked)");

  // softmax probabilities are kept for the backward pass
  auto probs = std::make_shared<std::vector<T>>(rows * v);
  T total = T(0);
  for (int64_t r = 0; r < rows; ++r) {
    if (mask[r] == T(0)) continue;
    const int64_t t = targets[r];
    if (t < 0 || t >= v) throw ShapeError("ce_loss_masked: target id out of range");
    const T* x = logits->data.data() + r * v;
    T* pr = probs->data() + r * v;
    T mx = x[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, x[j]);
    T sum = T(0);
    for (int64_t j = 0; j < v; ++j) {
      pr[j] = std::exp(x[j] - mx);
      sum += pr[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < v; ++j) pr[j] *= inv;
    total += -(std::log(std::max(pr[t], T(1e-30))));
  }
  auto out = Tensor<T>::scalar(total / static_cast<T>(count));
  if (g.recording()) {
    g.track(out, "ce_loss_masked");
    g.push_backward([logits, out, probs, targets, mask, count] {
      if (!logits->has_grad()) return;
      const int64_t rows = logits->rows(), v = logits->cols();
      const T d = out->grad[0] / static_cast<T>(count);
      for (int64_t r = 0; r < rows; ++r) {
        if (mask[r] == T(0)) continue;
        const T* pr = probs->data() + r * v;
        T* dx = logits->grad.data() + r * v;
        for (int64_t j = 0; j < v; ++j) dx[j] += d * pr[j];
        dx[targets[r]] -= d;
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> attention_pool(Graph<T>& g, const TensorPtr<T>& stack,
                            const TensorPtr<T>& weights, int64_t batch) {
  const int64_t rows = stack->rows(), hidden = stack->cols();
  if (weights->rows() != rows || weights->cols() != 1) {
    throw ShapeError("attention_pool: weights must be [(T*B) x 1]");
  }
  if (rows % batch != 0) throw ShapeError("attention_pool: rows not divisible by batch");
  auto out = Tensor<T>::make({batch, hidden});
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t b = r % batch;
    const T w = weights->data[r];
    const T* src = stack->data.data() + r * hidden;
    T* dst = out->data.data() + b * hidden;
    for (int64_t j = 0; j < hidden; ++j) dst[j] += w * src[j];
  }
  if (g.recording()) {
    g.track(out, "attention_pool");
    g.push_backward([stack, weights, out, batch] {
      const int64_t rows = stack->rows(), hidden = stack->cols();
      for (int64_t r = 0; r < rows; ++r) {
        const int64_t b = r % batch;
        const T* dy = out->grad.data() + b * hidden;
        if (stack->has_grad()) {
          const T w = weights->data[r];
          T* ds = stack->grad.data() + r * hidden;
          for (int64_t j = 0; j < hidden; ++j) ds[j] += w * dy[j];
        }
        if (weights->has_grad()) {
          const T* src = stack->data.data() + r * hidden;
          T dot = T(0);
          for (int64_t j = 0; j < hidden; ++j) dot += src[j] * dy[j];
          weights->grad[r] += dot;
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> masked_max_stack(Graph<T>& g, const std::vector<TensorPtr<T>>& parts,
                              const std::vector<std::vector<T>>& row_valid) {
  if (parts.empty()) throw ShapeError("masked_max_stack: empty input list");
  if (row_valid.size() != parts.size()) {
    throw ShapeError("masked_max_stack: one validity vector per part required");
  }
  const int64_t rows = parts[0]->rows(), cols = parts[0]->cols();
  for (size_t k = 0; k < parts.size(); ++k) {
    if (parts[k]->rows() != rows || parts[k]->cols() != cols) {
      throw ShapeError("masked_max_stack: shape mismatch");
    }
    if (static_cast<int64_t>(row_valid[k].size()) != rows) {
      throw ShapeError("masked_max_stack: validity length mismatch");
    }
  }
  auto out = Tensor<T>::make({rows, cols});
  // argmax index per output element; -1 = no valid part (output stays 0)
  auto argmax = std::make_shared<std::vector<int32_t>>(rows * cols, -1);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < cols; ++j) {
      T best = -std::numeric_limits<T>::infinity();
      int32_t best_k = -1;
      for (size_t k = 0; k < parts.size(); ++k) {
        if (row_valid[k][r] == T(0)) continue;
        const T v = parts[k]->data[r * cols + j];
        if (v > best) {
          best = v;
          best_k = static_cast<int32_t>(k);
        }
      }
      if (best_k >= 0) {
        out->data[r * cols + j] = best;
        (*argmax)[r * cols + j] = best_k;
      }
    }
  }
  if (g.recording()) {
    g.track(out, "masked_max_stack");
    g.push_backward([parts, out, argmax] {
      const int64_t n = out->numel();
      for (int64_t i = 0; i < n; ++i) {
        const int32_t k = (*argmax)[i];
        if (k >= 0 && parts[k]->has_grad()) parts[k]->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

// ---- helpers ---------------------------------------------------------------

template <typename T>
TensorPtr<T> uniform_init(Shape s, double lo, double hi, Rng& rng, bool req_grad) {
  auto t = Tensor<T>::make(std::move(s), req_grad);
  for (auto& v : t->data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
TensorPtr<T> fan_in_init(Shape s, int64_t fan_in, Rng& rng, bool req_grad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_init<T>(std::move(s), -bound, bound, rng, req_grad);
}

template <typename T>
TensorPtr<T> zeros(Shape s, bool req_grad) {
  return Tensor<T>::make(std::move(s), req_grad);
}

// ---- explicit instantiations ----------------------------------------------

#define CONVMFIT_INSTANTIATE_OPS(T)                                               \
  template struct Tensor<T>;                                                      \
  template class Graph<T>;                                                        \
  template TensorPtr<T> matmul(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> matmul_nt(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> add(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> sub(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> mul(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> add_rowvec(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> scale(Graph<T>&, const TensorPtr<T>&, T);                 \
  template TensorPtr<T> sigmoid(Graph<T>&, const TensorPtr<T>&);                  \
  template TensorPtr<T> tanh_op(Graph<T>&, const TensorPtr<T>&);                  \
  template TensorPtr<T> softmax_rows(Graph<T>&, const TensorPtr<T>&);             \
  template TensorPtr<T> masked_softmax_rows(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> activation(Graph<T>&, const TensorPtr<T>&, Activation);   \
  template TensorPtr<T> embedding_rows(Graph<T>&, const TensorPtr<T>&, const std::vector<int64_t>&, const std::vector<T>*); \
  template std::pair<TensorPtr<T>, TensorPtr<T>> lstm_cell(                       \
      Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,   \
      const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> concat_rows(Graph<T>&, const std::vector<TensorPtr<T>>&); \
  template TensorPtr<T> concat_cols(Graph<T>&, const std::vector<TensorPtr<T>>&); \
  template TensorPtr<T> sum_all(Graph<T>&, const TensorPtr<T>&);                  \
  template TensorPtr<T> mean_all(Graph<T>&, const TensorPtr<T>&);                 \
  template TensorPtr<T> bce_loss(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> ce_loss_masked(Graph<T>&, const TensorPtr<T>&, const std::vector<int64_t>&, const std::vector<T>&); \
  template TensorPtr<T> attention_pool(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&, int64_t); \
  template TensorPtr<T> masked_max_stack(Graph<T>&, const std::vector<TensorPtr<T>>&, const std::vector<std::vector<T>>&); \
  template TensorPtr<T> uniform_init<T>(Shape, double, double, Rng&, bool);       \
  template TensorPtr<T> fan_in_init<T>(Shape, int64_t, Rng&, bool);               \
  template TensorPtr<T> zeros<T>(Shape, bool);

CONVMFIT_INSTANTIATE_OPS(float)
CONVMFIT_INSTANTIATE_OPS(double)

#undef CONVMFIT_INSTANTIATE_OPS

}  // namespace convmfit
