#include "convmfit/dropout.hpp"

#include "convmfit/errors.hpp"

namespace convmfit {

namespace {

void require_rate(double p) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
}

}  // namespace

template <typename T>
TensorPtr<T> variational_dropout_mask(int64_t batch, int64_t hidden, double p, Rng& rng) {
  require_rate(p);
  auto mask = Tensor<T>::make({batch, hidden});
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto& v : mask->data) v = (p > 0.0 && rng.uniform() < p) ? T(0) : keep;
  return mask;
}

template <typename T>
std::vector<T> embedding_dropout_mask(int64_t vocab_size, double p, Rng& rng) {
  require_rate(p);
  std::vector<T> scales(vocab_size);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto& s : scales) s = (p > 0.0 && rng.uniform() < p) ? T(0) : keep;
  return scales;
}

template <typename T>
TensorPtr<T> apply_dropout(Graph<T>& g, const TensorPtr<T>& x, const DropoutSpec& spec,
                           Rng& rng) {
  if (!spec.active || spec.rate == 0.0) return x;  // exact identity
  require_rate(spec.rate);
  auto mask = Tensor<T>::make(x->shape);
  const T keep = static_cast<T>(1.0 / (1.0 - spec.rate));
  for (auto& v : mask->data) v = rng.uniform() < spec.rate ? T(0) : keep;
  return mul(g, x, mask);
}

template TensorPtr<float> variational_dropout_mask<float>(int64_t, int64_t, double, Rng&);
template TensorPtr<double> variational_dropout_mask<double>(int64_t, int64_t, double, Rng&);
template std::vector<float> embedding_dropout_mask<float>(int64_t, double, Rng&);
template std::vector<double> embedding_dropout_mask<double>(int64_t, double, Rng&);
template TensorPtr<float> apply_dropout<float>(Graph<float>&, const TensorPtr<float>&,
                                               const DropoutSpec&, Rng&);
template TensorPtr<double> apply_dropout<double>(Graph<double>&, const TensorPtr<double>&,
                                                 const DropoutSpec&, Rng&);

}  // namespace convmfit
