#pragma once

#include <cstdint>
#include <vector>

#include "stpred/predictor.hpp"
#include "stpred/rng.hpp"

namespace stp::tctn {

struct TCTNConfig {
  Index input_dim = 8;  // D'
  Index channels = 64;
  Index layers = 6;
  Index kernel = 3;       // spatial and temporal extent of every attention / FFN kernel
  Index ffn_expand = 2;
  double leak = 0.2;
  double ln_eps = 1e-5;
};

/// Sinusoidal table [S, H, W, D]: sin(j / 10000^(2d/D)) at channel 2d, cos at 2d+1.
template <typename T>
Tensor<T> positional_embedding(Index steps, Index height, Index width, Index dim);

/// [S, S] additive mask: 0 where key <= query, -inf after.
template <typename T>
Tensor<T> causal_mask(Index steps);

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma, beta;  // per channel
};

template <typename T>
struct TCTNLayerParams {
  Tensor<T> w_q, b_q, w_k, b_k, w_v, b_v;  // [C, C, k, k, k]
  Tensor<T> w_2, b_2;                      // [eC, C, k, k, k]
  Tensor<T> w_1, b_1;                      // [C, eC, k, k, k]
  LayerNormParams<T> ln_e, ln_a, ln_s;

  static TCTNLayerParams init(const TCTNConfig& cfg, Rng& rng);
  ParamList<T> named(const std::string& prefix) const;
};

template <typename T>
struct AttentionResult {
  Tensor<T> a;        // [N, S, C, H, W]
  Tensor<T> weights;  // [N, S, S], rows over keys
};

/// E: [N, S, C, H, W]. Scores contract Q_s and K_s' over channels and sites jointly, scaled by 1/sqrt(C).
template <typename T>
AttentionResult<T> masked_conv_attention(const Tensor<T>& e, const TCTNLayerParams<T>& p, const TCTNConfig& cfg);

/// Attention, residual, normalization and the convolutional feed-forward block; same shape out.
template <typename T>
Tensor<T> decoder_layer(const Tensor<T>& e, const TCTNLayerParams<T>& p, const TCTNConfig& cfg);

/// 1x1x1 convolution over [N, S, C, H, W] (time-major layout in and out).
template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
class TCTNPredictor : public LatentPredictor<T> {
 public:
  TCTNPredictor(const TCTNConfig& cfg, std::uint64_t seed);

  const TCTNConfig& config() const { return cfg_; }
  std::vector<TCTNLayerParams<T>>& layers() { return layers_; }

  /// Z: [N, S, D', H', W'] -> predictions of Z_{t+1} at every position t, same shape.
  Tensor<T> forward(const Tensor<T>& z) const;

  Tensor<T> forward_train(const Tensor<T>& sequence, const std::vector<bool>& use_truth) const override;
  Tensor<T> rollout(const Tensor<T>& context, Index horizon) const override;
  ParamList<T> parameters() const override;
  std::string name() const override { return "tctn"; }

 private:
  TCTNConfig cfg_;
  Tensor<T> in_w_, in_b_;  // [C, D', 1, 1, 1]
  std::vector<TCTNLayerParams<T>> layers_;
  Tensor<T> out_w_, out_b_;  // [D', C, 1, 1, 1]
};

}  // namespace stp::tctn
