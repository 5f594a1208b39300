#include "cbamc/nn/adam.hpp"

#include <cmath>

namespace cbamc::nn {

template <typename T>
Adam<T>::Adam(AdamConfig config, std::vector<Param<T>*> params) : config_(config), params_(std::move(params)) {
  if (!(config_.learning_rate > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0 || !(config_.epsilon > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "invalid Adam hyper-parameters");
  }
  for (const auto* p : params_) {
    first_moment_.emplace_back(p->value.size(), T(0));
    second_moment_.emplace_back(p->value.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T lr = static_cast<T>(config_.learning_rate);
  const T eps = static_cast<T>(config_.epsilon);
  const T inv_c1 = static_cast<T>(1.0 / correction1);
  const T inv_c2 = static_cast<T>(1.0 / correction2);

  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param<T>& p = *params_[k];
    if (p.grad.shape() != p.value.shape() || first_moment_[k].size() != p.value.size()) {
      throw Error(ErrorCode::ShapeMismatch, "Adam: gradient shape does not match parameter " + p.name);
    }
    auto& m = first_moment_[k];
    auto& v = second_moment_[k];
    T* theta = p.value.data();
    const T* g = p.grad.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] * inv_c1;
      const T v_hat = v[i] * inv_c2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace cbamc::nn
