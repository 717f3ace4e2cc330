#pragma once

#include <string>
#include <vector>

#include "stpred/nn.hpp"
#include "stpred/tensor.hpp"

namespace stp {

/// Latent sequences are batched as [N, S, D', H', W'].
template <typename T>
class LatentPredictor {
 public:
  virtual ~LatentPredictor() = default;

  /// One-step-ahead predictions for steps 1..S-1, shape [N, S-1, D', H', W'].
  /// use_truth[t] (t = 1..S-2) picks ground truth over the previous prediction as the input at step t;
  /// an empty vector means teacher forcing throughout. Predictors that always see ground truth ignore it.
  virtual Tensor<T> forward_train(const Tensor<T>& sequence, const std::vector<bool>& use_truth) const = 0;

  /// Consumes `context` [N, n, ...] and returns the next `horizon` latents [N, m, ...],
  /// feeding each prediction back as input.
  virtual Tensor<T> rollout(const Tensor<T>& context, Index horizon) const = 0;

  virtual ParamList<T> parameters() const = 0;
  virtual std::string name() const = 0;
};

inline void require_sequence(const Shape& s, Index channels, const char* who) {
  if (s.size() != 5) throw ShapeError(std::string(who) + ": sequence must be [N,S,D,H,W], got " + shape_str(s));
  if (s[2] != channels)
    throw ShapeError(std::string(who) + ": expected " + std::to_string(channels) + " channels, got " +
                     shape_str(s));
}

}  // namespace stp
