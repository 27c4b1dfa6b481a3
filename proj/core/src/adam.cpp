#include "convmfit/adam.hpp"

#include <cmath>
#include <sstream>

#include "convmfit/errors.hpp"

namespace convmfit {

template <typename T>
void Adam<T>::add_param(std::string name, TensorPtr<T> param, int group,
                        std::vector<int64_t> frozen_rows) {
  param->requires_grad = true;
  param->ensure_grad();
  Entry e;
  e.name = std::move(name);
  e.param = std::move(param);
  e.state.m.assign(e.param->data.size(), T(0));
  e.state.v.assign(e.param->data.size(), T(0));
  e.group = group;
  e.frozen_rows = std::move(frozen_rows);
  entries_.push_back(std::move(e));
  if (group >= static_cast<int>(group_active_.size())) {
    group_active_.resize(group + 1, true);
  }
}

template <typename T>
void Adam<T>::set_group_active(int group, bool active) {
  if (group >= static_cast<int>(group_active_.size())) {
    group_active_.resize(group + 1, true);
  }
  group_active_[group] = active;
}

template <typename T>
bool Adam<T>::group_active(int group) const {
  return group >= static_cast<int>(group_active_.size()) || group_active_[group];
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& e : entries_) e.param->zero_grad();
}

template <typename T>
void Adam<T>::step() {
  for (auto& e : entries_) {
    if (!group_active(e.group)) continue;  // frozen: no moments, no t, no move
    auto& p = e.param->data;
    auto& grad = e.param->grad;
    const int64_t cols = e.param->cols();
    for (int64_t row : e.frozen_rows) {
      std::fill(grad.begin() + row * cols, grad.begin() + (row + 1) * cols, T(0));
    }
    for (T gv : grad) {
      if (!std::isfinite(static_cast<double>(gv))) {
        std::ostringstream os;
        os << "non-finite gradient in parameter '" << e.name << "' at step "
           << (e.state.t + 1);
        throw NumericError(os.str());
      }
    }
    auto& st = e.state;
    st.t += 1;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T corr1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t)));
    const T corr2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t)));
    const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
    const size_t n = p.size();
    for (size_t i = 0; i < n; ++i) {
      const T gv = grad[i];
      st.m[i] = b1 * st.m[i] + (T(1) - b1) * gv;
      st.v[i] = b2 * st.v[i] + (T(1) - b2) * gv * gv;
      const T mhat = st.m[i] / corr1;
      const T vhat = st.v[i] / corr2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace convmfit
