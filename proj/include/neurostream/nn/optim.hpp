#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "neurostream/nn/layers.hpp"

namespace neurostream::nn {

enum class OptimizerKind { sgd, adam };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}

// Plain gradient descent or adaptive-moment estimation over a fixed parameter
// list. Attach once; step() applies the accumulated gradients.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8)
      : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  static Optimizer sgd(double lr) { return Optimizer(OptimizerKind::sgd, lr); }
  static Optimizer adam(double lr = 1e-3) { return Optimizer(OptimizerKind::adam, lr); }

  void attach(std::vector<ParamRef<T>> params) {
    params_ = std::move(params);
    m_.clear();
    v_.clear();
    if (kind_ == OptimizerKind::adam) {
      m_.reserve(params_.size());
      v_.reserve(params_.size());
      for (const auto& p : params_) {
        m_.emplace_back(p.value->shape());
        v_.emplace_back(p.value->shape());
      }
    }
    step_count_ = 0;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->zero();
  }

  void step() {
    ++step_count_;
    if (kind_ == OptimizerKind::sgd) {
      for (auto& p : params_) {
        T* w = p.value->ptr();
        const T* g = p.grad->ptr();
        for (std::size_t i = 0; i < p.value->numel(); ++i)
          w[i] -= static_cast<T>(lr_ * static_cast<double>(g[i]));
      }
      return;
    }
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      T* w = params_[pi].value->ptr();
      const T* g = params_[pi].grad->ptr();
      T* m = m_[pi].ptr();
      T* v = v_[pi].ptr();
      for (std::size_t i = 0; i < params_[pi].value->numel(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
        const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        w[i] -= static_cast<T>(lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_));
      }
    }
  }

  OptimizerKind kind() const { return kind_; }
  double lr() const { return lr_; }
  std::uint64_t step_count() const { return step_count_; }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t step_count_ = 0;
  std::vector<ParamRef<T>> params_;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace neurostream::nn
