#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convmfit/tensor.hpp"

namespace convmfit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter Adam state. t counts the steps actually applied to this
// parameter; a parameter in a frozen group accumulates neither moments nor
// steps, so unfreezing starts from clean momentum.
template <typename T>
struct AdamState {
  std::vector<T> m, v;
  int64_t t = 0;
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // frozen_rows: rows of this parameter that are never updated (the <pad>
  // embedding row); their gradients are cleared before the moment update.
  void add_param(std::string name, TensorPtr<T> param, int group = 0,
                 std::vector<int64_t> frozen_rows = {});

  void set_group_active(int group, bool active);
  bool group_active(int group) const;
  int num_groups() const { return static_cast<int>(group_active_.size()); }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

  void zero_grad();

  // Bias-corrected update on all parameters of active groups. A non-finite
  // gradient aborts with diagnostics naming the parameter.
  void step();

  struct Entry {
    std::string name;
    TensorPtr<T> param;
    AdamState<T> state;
    int group = 0;
    std::vector<int64_t> frozen_rows;
  };
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  AdamConfig cfg_;
  std::vector<Entry> entries_;
  std::vector<bool> group_active_;
};

}  // namespace convmfit
