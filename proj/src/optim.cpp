#include "stpred/optim.hpp"

#include <cmath>
#include <string>

namespace stp {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t t,
                 const AdamConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw ShapeError("adam_update: parameter, gradient and moment lengths differ (" + std::to_string(param.size()) +
                     ", " + std::to_string(grad.size()) + ", " + std::to_string(m.size()) + ", " +
                     std::to_string(v.size()) + ")");
  if (t < 1) throw std::invalid_argument("adam_update: step index must be >= 1");
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
    v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  std::vector<T> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    std::span<const T> g = p.grad();
    if (!p.has_grad()) {
      zeros.assign(static_cast<std::size_t>(p.numel()), T(0));
      g = zeros;
    }
    adam_update<T>(p.mutable_data(), g, m_[i], v_[i], t_, cfg_);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
Index Adam<T>::state_elements() const {
  Index n = 0;
  for (const auto& m : m_) n += static_cast<Index>(m.size());
  return 2 * n;
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::int64_t, const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::int64_t, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace stp
