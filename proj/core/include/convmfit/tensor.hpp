#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "convmfit/errors.hpp"
#include "convmfit/rng.hpp"

namespace convmfit {

using Shape = std::vector<int64_t>;

// Dense row-major tensor. All graph ops treat tensors as 2-D (rows x cols);
// a scalar is [1,1]. The grad buffer exists only for tensors that participate
// in backprop: leaves with requires_grad, and every op output recorded on a
// tape. Tensors without a grad buffer are constants to the tape.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, bool req_grad = false);

  static std::shared_ptr<Tensor<T>> make(Shape s, bool req_grad = false);
  static std::shared_ptr<Tensor<T>> scalar(T value);
  static std::shared_ptr<Tensor<T>> from(Shape s, std::vector<T> values,
                                         bool req_grad = false);

  int64_t numel() const;
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();
  void zero_grad();

  T item() const;  // value of a [1,1] tensor
  bool all_finite() const;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

// Reverse-mode tape. Ops append one backward closure per node while
// recording; backward() replays them in reverse. A Graph and the tensors it
// records are confined to one thread for the duration of a step.
template <typename T>
class Graph {
 public:
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  // Debug aid: when set, every tracked op output is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  // Registers an op output: allocates its grad accumulator.
  void track(const TensorPtr<T>& out, const char* op_name);
  void push_backward(std::function<void()> fn);

  // Populates grads of every tracked/requires_grad tensor reachable from
  // loss. Loss must be a tracked scalar.
  void backward(const TensorPtr<T>& loss);

  void clear();
  size_t size() const { return tape_.size(); }

 private:
  std::vector<std::function<void()>> tape_;
  bool recording_ = true;
  bool check_finite_ = false;
};

enum class Activation { kSigmoid, kTanh, kSoftmaxLastAxis };

// ---- graph ops ------------------------------------------------------------
// Every op computes forward immediately and, while the graph is recording,
// appends the matching backward rule.

template <typename T>
TensorPtr<T> matmul(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b);

// a[m x k] * b[n x k]^T -> [m x n]; used for the tied embedding head.
template <typename T>
TensorPtr<T> matmul_nt(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> add(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> sub(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> mul(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& b);

// broadcast add of a [1 x n] row vector to every row of a [m x n] tensor
template <typename T>
TensorPtr<T> add_rowvec(Graph<T>& g, const TensorPtr<T>& a, const TensorPtr<T>& bias);

template <typename T>
TensorPtr<T> scale(Graph<T>& g, const TensorPtr<T>& a, T factor);

template <typename T>
TensorPtr<T> sigmoid(Graph<T>& g, const TensorPtr<T>& a);

template <typename T>
TensorPtr<T> tanh_op(Graph<T>& g, const TensorPtr<T>& a);

// softmax over the last axis (cols), max-shifted
template <typename T>
TensorPtr<T> softmax_rows(Graph<T>& g, const TensorPtr<T>& a);

// softmax over cols restricted to mask != 0; masked entries are exactly 0.
// Rows whose mask is all zero are an error.
template <typename T>
TensorPtr<T> masked_softmax_rows(Graph<T>& g, const TensorPtr<T>& a,
                                 const TensorPtr<T>& mask);

template <typename T>
TensorPtr<T> activation(Graph<T>& g, const TensorPtr<T>& a, Activation fn);

// Gathers rows of table [V x d] by id; optional per-row scale implements
// embedding dropout. Backward scatter-adds into the table.
template <typename T>
TensorPtr<T> embedding_rows(Graph<T>& g, const TensorPtr<T>& table,
                            const std::vector<int64_t>& ids,
                            const std::vector<T>* row_scale = nullptr);

// Fused LSTM cell. Weights: w_ih [in x 4H], w_hh [H x 4H], bias [1 x 4H] with
// gate order (input, forget, candidate, output). step_mask, when given, is
// [B x 1]; rows with mask 0 carry h and c through unchanged, which makes the
// state at the last step equal to the state at each row's true length.
template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> lstm_cell(
    Graph<T>& g, const TensorPtr<T>& x, const TensorPtr<T>& h,
    const TensorPtr<T>& c, const TensorPtr<T>& w_ih, const TensorPtr<T>& w_hh,
    const TensorPtr<T>& bias, const TensorPtr<T>& step_mask = nullptr);

template <typename T>
TensorPtr<T> concat_rows(Graph<T>& g, const std::vector<TensorPtr<T>>& parts);

template <typename T>
TensorPtr<T> concat_cols(Graph<T>& g, const std::vector<TensorPtr<T>>& parts);

template <typename T>
TensorPtr<T> sum_all(Graph<T>& g, const TensorPtr<T>& a);

template <typename T>
TensorPtr<T> mean_all(Graph<T>& g, const TensorPtr<T>& a);

// mean over elements of -[y ln p + (1-y) ln(1-p)], p clamped to
// [1e-12, 1-1e-12]. y is a constant tensor of {0,1}.
template <typename T>
TensorPtr<T> bce_loss(Graph<T>& g, const TensorPtr<T>& p, const TensorPtr<T>& y);

// mean over mask!=0 positions of -log softmax(logits)[target].
// logits [R x V], targets[R] in [0, V), mask[R]. All positions masked is an
// error ("empty loss"), as is an out-of-range target id.
template <typename T>
TensorPtr<T> ce_loss_masked(Graph<T>& g, const TensorPtr<T>& logits,
                            const std::vector<int64_t>& targets,
                            const std::vector<T>& mask);

// Pools a time-major stack [(T*B) x H] with weights [(T*B) x 1] into [B x H]:
// out[b] = sum_t w[t*B+b] * stack[t*B+b].
template <typename T>
TensorPtr<T> attention_pool(Graph<T>& g, const TensorPtr<T>& stack,
                            const TensorPtr<T>& weights, int64_t batch);

// Elementwise max over a list of equally shaped tensors, restricted to
// entries whose row is valid for that tensor; rows valid nowhere yield 0.
// Backward routes the gradient to the argmax tensor. Used by the CNN
// baseline's max-over-time pooling.
template <typename T>
TensorPtr<T> masked_max_stack(Graph<T>& g, const std::vector<TensorPtr<T>>& parts,
                              const std::vector<std::vector<T>>& row_valid);

// ---- helpers --------------------------------------------------------------

template <typename T>
TensorPtr<T> uniform_init(Shape s, double lo, double hi, Rng& rng,
                          bool req_grad = true);

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
template <typename T>
TensorPtr<T> fan_in_init(Shape s, int64_t fan_in, Rng& rng, bool req_grad = true);

template <typename T>
TensorPtr<T> zeros(Shape s, bool req_grad = false);

}  // namespace convmfit
