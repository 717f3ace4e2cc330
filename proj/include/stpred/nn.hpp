#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stpred/rng.hpp"
#include "stpred/tensor.hpp"

namespace stp {

template <typename T>
using NamedTensor = std::pair<std::string, Tensor<T>>;
template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

/// Trainable tensor with entries uniform in [-bound, bound].
template <typename T>
Tensor<T> uniform_param(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

/// Kernel initialized uniform in +-1/sqrt(fan_in), fan_in = product of all but the leading extent.
template <typename T>
Tensor<T> kernel_param(Shape shape, Rng& rng) {
  Index fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return uniform_param<T>(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

template <typename T>
Tensor<T> constant_param(Shape shape, T value) {
  Tensor<T> t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

template <typename T>
void set_trainable(ParamList<T>& params, bool on) {
  for (auto& [name, t] : params) t.set_requires_grad(on);
}

template <typename T>
Index param_count(const ParamList<T>& params) {
  Index n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace stp
