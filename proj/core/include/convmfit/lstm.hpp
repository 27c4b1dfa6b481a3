#pragma once

#include <string>
#include <utility>
#include <vector>

#include "convmfit/dropout.hpp"
#include "convmfit/tensor.hpp"

namespace convmfit {

template <typename T>
struct LstmLayer {
  TensorPtr<T> w_ih;  // [input x 4H]
  TensorPtr<T> w_hh;  // [H x 4H]
  TensorPtr<T> bias;  // [1 x 4H]
  int64_t input_size = 0;
  int64_t hidden_size = 0;

  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases except the
  // forget gate at +1
  void init(int64_t input, int64_t hidden, Rng& rng);
};

// A stack of LSTM layers with variational dropout on every layer's output:
// one mask per layer is sampled per call and reused at every time step.
template <typename T>
class LstmStack {
 public:
  LstmStack() = default;
  LstmStack(int n_layers, int64_t input_size, int64_t hidden_size, double output_dropout);

  void init(Rng& rng);

  int n_layers() const { return static_cast<int>(layers_.size()); }
  int64_t hidden_size() const { return hidden_; }
  int64_t input_size() const { return input_; }
  double output_dropout() const { return output_dropout_; }

  struct States {
    std::vector<TensorPtr<T>> h, c;  // one per layer, [B x H]
    bool empty() const { return h.empty(); }
  };
  States zero_states(int64_t batch) const;

  struct RunResult {
    std::vector<TensorPtr<T>> outputs;  // top-layer output per step, post-dropout
    States final_states;                // raw recurrent states per layer
  };

  // xs: per-step inputs [B x input]. step_masks (optional, per step [B x 1]):
  // rows with mask 0 carry state through. init may be empty() for zeros.
  RunResult run(Graph<T>& g, const std::vector<TensorPtr<T>>& xs,
                const std::vector<TensorPtr<T>>& step_masks, const States& init,
                bool train, Rng& rng) const;

  std::vector<std::pair<std::string, TensorPtr<T>>> named_params(
      const std::string& prefix) const;

  int64_t param_count() const;

  const std::vector<LstmLayer<T>>& layers() const { return layers_; }
  std::vector<LstmLayer<T>>& layers() { return layers_; }

 private:
  std::vector<LstmLayer<T>> layers_;
  int64_t input_ = 0;
  int64_t hidden_ = 0;
  double output_dropout_ = 0.0;
};

// Deep copies of recurrent states with gradient tracking severed; used to
// carry state across truncated-backprop windows.
template <typename T>
typename LstmStack<T>::States detach_states(const typename LstmStack<T>::States& states);

}  // namespace convmfit
