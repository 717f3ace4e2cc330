#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stpred/tensor.hpp"

namespace stp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update at (1-based) step `t`.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t t,
                 const AdamConfig& cfg);

/// Adam over a fixed parameter list. A parameter without a gradient is
/// updated as if its gradient were zero.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig cfg);

  void step();
  void zero_grad();

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  /// Elements of optimizer state (two moments per parameter element).
  Index state_elements() const;

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace stp
