#include "convmfit/lstm.hpp"

#include "convmfit/errors.hpp"

namespace convmfit {

template <typename T>
void LstmLayer<T>::init(int64_t input, int64_t hidden, Rng& rng) {
  input_size = input;
  hidden_size = hidden;
  w_ih = fan_in_init<T>({input, 4 * hidden}, input, rng);
  w_hh = fan_in_init<T>({hidden, 4 * hidden}, hidden, rng);
  bias = zeros<T>({1, 4 * hidden}, true);
  for (int64_t j = 0; j < hidden; ++j) bias->data[hidden + j] = T(1);  // forget gate
}

template <typename T>
LstmStack<T>::LstmStack(int n_layers, int64_t input_size, int64_t hidden_size,
                        double output_dropout)
    : input_(input_size), hidden_(hidden_size), output_dropout_(output_dropout) {
  layers_.resize(n_layers);
}

template <typename T>
void LstmStack<T>::init(Rng& rng) {
  for (size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].init(l == 0 ? input_ : hidden_, hidden_, rng);
  }
}

template <typename T>
typename LstmStack<T>::States LstmStack<T>::zero_states(int64_t batch) const {
  States s;
  for (int l = 0; l < n_layers(); ++l) {
    s.h.push_back(zeros<T>({batch, hidden_}));
    s.c.push_back(zeros<T>({batch, hidden_}));
  }
  return s;
}

template <typename T>
typename LstmStack<T>::RunResult LstmStack<T>::run(
    Graph<T>& g, const std::vector<TensorPtr<T>>& xs,
    const std::vector<TensorPtr<T>>& step_masks, const States& init, bool train,
    Rng& rng) const {
  if (xs.empty()) throw ShapeError("LstmStack::run: no input steps");
  if (!step_masks.empty() && step_masks.size() != xs.size()) {
    throw ShapeError("LstmStack::run: one step mask per step required");
  }
  const int64_t batch = xs[0]->rows();
  States state = init.empty() ? zero_states(batch) : init;
  if (static_cast<int>(state.h.size()) != n_layers()) {
    throw ShapeError("LstmStack::run: init state layer count mismatch");
  }

  std::vector<TensorPtr<T>> inputs = xs;
  RunResult result;
  for (int l = 0; l < n_layers(); ++l) {
    const auto& layer = layers_[l];
    TensorPtr<T> mask;  // variational: same mask at every step of this call
    if (train && output_dropout_ > 0.0) {
      mask = variational_dropout_mask<T>(batch, hidden_, output_dropout_, rng);
    }
    std::vector<TensorPtr<T>> outs(inputs.size());
    auto h = state.h[l];
    auto c = state.c[l];
    for (size_t t = 0; t < inputs.size(); ++t) {
      auto [hn, cn] = lstm_cell(g, inputs[t], h, c, layer.w_ih, layer.w_hh, layer.bias,
                                step_masks.empty() ? nullptr : step_masks[t]);
      h = hn;
      c = cn;
      outs[t] = mask ? mul(g, hn, mask) : hn;
    }
    state.h[l] = h;
    state.c[l] = c;
    inputs = std::move(outs);
  }
  result.outputs = std::move(inputs);
  result.final_states = std::move(state);
  return result;
}

template <typename T>
std::vector<std::pair<std::string, TensorPtr<T>>> LstmStack<T>::named_params(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, TensorPtr<T>>> out;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    out.emplace_back(base + ".w_ih", layers_[l].w_ih);
    out.emplace_back(base + ".w_hh", layers_[l].w_hh);
    out.emplace_back(base + ".bias", layers_[l].bias);
  }
  return out;
}

template <typename T>
int64_t LstmStack<T>::param_count() const {
  int64_t n = 0;
  for (const auto& l : layers_) n += l.w_ih->numel() + l.w_hh->numel() + l.bias->numel();
  return n;
}

template <typename T>
typename LstmStack<T>::States detach_states(const typename LstmStack<T>::States& states) {
  typename LstmStack<T>::States out;
  for (const auto& h : states.h) out.h.push_back(Tensor<T>::from(h->shape, h->data));
  for (const auto& c : states.c) out.c.push_back(Tensor<T>::from(c->shape, c->data));
  return out;
}

template struct LstmLayer<float>;
template struct LstmLayer<double>;
template class LstmStack<float>;
template class LstmStack<double>;
template LstmStack<float>::States detach_states<float>(const LstmStack<float>::States&);
template LstmStack<double>::States detach_states<double>(const LstmStack<double>::States&);

}  // namespace convmfit
