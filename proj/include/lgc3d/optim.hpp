#pragma once

#include <cmath>
#include <vector>

#include "lgc3d/autodiff.hpp"

namespace lgc3d {

// v <- alpha*v + (1-alpha)*g^2 ; theta <- theta - lr*g/(sqrt(v)+eps)
template <typename T>
void rmsprop_update(Tensor<T>& theta, const Tensor<T>& grad, Tensor<T>& v, T lr, T alpha, T eps) {
  check_same_shape(theta, grad, "rmsprop");
  check_same_shape(theta, v, "rmsprop state");
  const int64_t n = theta.numel();
  for (int64_t i = 0; i < n; ++i) {
    const T g = grad[i];
    v[i] = alpha * v[i] + (T(1) - alpha) * g * g;
    theta[i] -= lr * g / (std::sqrt(v[i]) + eps);
  }
}

template <typename T>
class Rmsprop {
 public:
  Rmsprop(std::vector<ad::NodePtr<T>> params, T lr, T alpha = T(0.99), T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), alpha_(alpha), eps_(eps) {
    for (const auto& p : params_) state_.emplace_back(p->value.shape());
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void step() {
    for (size_t i = 0; i < params_.size(); ++i) {
      params_[i]->ensure_grad();
      rmsprop_update(params_[i]->value, params_[i]->grad, state_[i], lr_, alpha_, eps_);
    }
  }

  const std::vector<Tensor<T>>& state() const { return state_; }

 private:
  std::vector<ad::NodePtr<T>> params_;
  std::vector<Tensor<T>> state_;
  T lr_, alpha_, eps_;
};

}  // namespace lgc3d
