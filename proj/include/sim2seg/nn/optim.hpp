#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sim2seg/nn/layers.hpp"

namespace sim2seg::nn {

/// Adaptive-moment optimizer over a fixed parameter list.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<Scalar> params, double beta1, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.push_back(Tensor<Scalar>(p.var->value.shape()));
      v_.push_back(Tensor<Scalar>(p.var->value.shape()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(beta1_);
    const auto b2 = static_cast<Scalar>(beta2_);
    const auto step_size = static_cast<Scalar>(lr / c1);
    const auto root_c2 = static_cast<Scalar>(std::sqrt(c2));
    const auto eps = static_cast<Scalar>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& node = *params_[i].var;
      if (!node.has_grad()) continue;
      const auto& g = node.grad.values();
      auto& m = m_[i].values();
      auto& v = v_[i].values();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
      node.value.values() -= step_size * m / (v.sqrt() / root_c2 + eps);
    }
  }

  const ParamList<Scalar>& params() const { return params_; }
  std::vector<Tensor<Scalar>>& first_moments() { return m_; }
  std::vector<Tensor<Scalar>>& second_moments() { return v_; }
  const std::vector<Tensor<Scalar>>& first_moments() const { return m_; }
  const std::vector<Tensor<Scalar>>& second_moments() const { return v_; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  ParamList<Scalar> params_;
  std::vector<Tensor<Scalar>> m_;
  std::vector<Tensor<Scalar>> v_;
  double beta1_ = 0.5;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
};

/// Constant rate for the first half of training, then linear decay to zero.
inline double linear_decay_lr(double base, std::int64_t step, std::int64_t total) {
  const std::int64_t half = total / 2;
  if (total <= 0 || step < half) return base;
  const double remaining = static_cast<double>(total - step) / static_cast<double>(total - half + 1);
  return base * std::max(0.0, remaining);
}

template <typename Scalar>
bool all_finite(const ParamList<Scalar>& params) {
  for (const auto& p : params) {
    if (!p.var->value.all_finite()) return false;
  }
  return true;
}

}  // namespace sim2seg::nn
