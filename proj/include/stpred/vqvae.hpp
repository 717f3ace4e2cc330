#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stpred/nn.hpp"
#include "stpred/optim.hpp"
#include "stpred/tensor.hpp"

namespace stp::vq {

struct VQConfig {
  Index in_channels = 1;
  Index hidden = 32;
  Index latent_dim = 8;  // D'
  Index codebook_size = 64;
  Index res_blocks = 2;
  double leak = 0.2;
  // Starting logit of the output sigmoid. Frames are mostly background; a logit near the mean
  // intensity keeps the first Adam steps from driving every pixel into saturation.
  double output_bias = -2.5;
};

/// Spatial downsampling between frames and latent grids.
inline constexpr Index kDownsample = 4;

template <typename T>
struct Codebook {
  Tensor<T> entries;  // [K, D']
  Index size() const { return entries.dim(0); }
  Index dim() const { return entries.dim(1); }
};

template <typename T>
struct VQOutput {
  Tensor<T> z_e;                      // [N, D', H', W']
  std::vector<std::int32_t> indices;  // [N, H', W'] row-major
  Tensor<T> z_q;                      // [N, D', H', W'], rows of the codebook
};

struct VQLossWeights {
  double beta = 0.25;
};

struct VQLossValues {
  double reconstruction = 0;
  double codebook = 0;
  double commitment = 0;
  double total = 0;
};

/// Nearest codebook row per site of z_e [N, D', H', W'] (squared L2, ties to the lowest index).
template <typename T>
std::vector<std::int32_t> nearest_indices(const Tensor<T>& z_e, const Tensor<T>& entries);

/// Forward value z_q; gradient copied to z_e unchanged, none to z_q.
template <typename T>
Tensor<T> straight_through(const Tensor<T>& z_e, const Tensor<T>& z_q);

/// Distinct entries hit by `indices`, divided by K.
double codebook_usage(std::span<const std::int32_t> indices, Index codebook_size);

template <typename T>
class VQVAE {
 public:
  VQVAE(const VQConfig& cfg, std::uint64_t seed);

  const VQConfig& config() const { return cfg_; }

  /// [N, C, H, W] -> [N, D', H/4, W/4].
  Tensor<T> encode(const Tensor<T>& frames) const;
  VQOutput<T> quantize(const Tensor<T>& z_e) const;
  /// [N, D', H', W'] -> [N, C, 4H', 4W'] in (0,1).
  Tensor<T> decode(const Tensor<T>& z) const;

  /// Snaps every site of z to its nearest codebook row (no gradient).
  Tensor<T> requantize(const Tensor<T>& z) const;

  struct Forward {
    VQOutput<T> vq;
    Tensor<T> reconstruction;
    Tensor<T> loss;
    VQLossValues values;
  };
  /// Full pass with the three-term loss; records on the active tape.
  Forward forward(const Tensor<T>& frames, const VQLossWeights& weights) const;

  Codebook<T>& codebook() { return codebook_; }
  const Codebook<T>& codebook() const { return codebook_; }

  /// Every tensor, codebook first, under its checkpoint name.
  ParamList<T> parameters() const;
  Index trainable_count() const;

  void freeze();
  bool frozen() const { return frozen_; }

 private:
  struct Conv {
    Tensor<T> kernel, bias;
  };
  struct Residual {
    Conv c3, c1;
  };
  Tensor<T> residual(const Residual& r, const Tensor<T>& x) const;
  Tensor<T> act(const Tensor<T>& x) const;

  VQConfig cfg_;
  Conv enc1_, enc2_, enc_proj_, dec_in_;
  std::vector<Residual> enc_res_, dec_res_;
  Conv dec_up1_, dec_up2_;  // transposed kernels [C_in, C_out, 4, 4]
  Codebook<T> codebook_;
  bool frozen_ = false;
};

/// One optimizer step on the VQ loss. Throws NumericalError on a non-finite loss.
template <typename T>
VQLossValues vq_train_step(VQVAE<T>& model, Adam<T>& opt, const Tensor<T>& frames, const VQLossWeights& weights);

}  // namespace stp::vq
