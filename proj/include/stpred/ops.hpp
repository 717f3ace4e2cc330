#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "stpred/tensor.hpp"

/// Differentiable tensor primitives. Every op records onto the active tape
/// when any operand requires a gradient. Binary elementwise ops demand
/// identical shapes; there is no implicit broadcasting.
namespace stp::ops {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T alpha);

/// x + bias broadcast along `axis` (bias has x.dim(axis) entries).
template <typename T> Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& bias, int axis = 1);
/// x * gamma + beta with per-index parameters along `axis`.
template <typename T>
Tensor<T> scale_shift(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, int axis = 1);

/// x: [N,C,H,W], kernel: [O,C,kh,kw], optional bias [O].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias = {},
                 Index stride = 1, Index padding = 0);

/// x: [N,C,H,W], kernel: [C,O,kh,kw]. Output H' = (H-1)*stride - 2*padding + kh.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias = {},
                           Index stride = 1, Index padding = 0);

struct Conv3dOptions {
  std::array<Index, 3> stride{1, 1, 1};   // t, h, w
  std::array<Index, 3> padding{0, 0, 0};  // t padding is ignored when causal_time is set
  bool causal_time = false;               // pad kt-1 leading frames, none trailing
};

/// x: [N,C,T,H,W], kernel: [O,C,kt,kh,kw], optional bias [O].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias = {},
                 const Conv3dOptions& options = {});

/// Normalizes every slice over the trailing `trailing_axes` axes to zero mean and unit variance.
template <typename T> Tensor<T> layer_norm(const Tensor<T>& x, int trailing_axes, T eps);

/// Max-subtracted softmax along `axis`. -inf inputs map to exact zeros.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

/// Softmax over the last axis after adding `mask` (entries 0 or -inf) shaped like x's last two axes.
template <typename T> Tensor<T> masked_softmax(const Tensor<T>& x, const Tensor<T>& mask);

/// [M,K]x[K,N] or batched [B,M,K]x[B,K,N]; transposes apply to the last two axes.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false,
                 bool transpose_b = false);

template <typename T> Tensor<T> concat(std::span<const Tensor<T>> parts, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, Index begin, Index end);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, std::span<const int> axes);

/// Full reduction to a rank-0 tensor.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// Reduction over the listed axes; reduced axes are dropped.
template <typename T> Tensor<T> sum(const Tensor<T>& x, std::span<const int> axes);
template <typename T> Tensor<T> mean(const Tensor<T>& x, std::span<const int> axes);

/// Identity forward; blocks gradient flow.
template <typename T> Tensor<T> stop_gradient(const Tensor<T>& x);

/// Rows of table [K,D] placed on an [N,D,H,W] grid, one row index per site (n,h,w).
template <typename T>
Tensor<T> embed_grid(const Tensor<T>& table, std::span<const std::int32_t> indices, Index n, Index h,
                     Index w);

/// mean((a-b)^2) over all elements.
template <typename T> Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b);

/// Convenience overloads.
template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, int axis) {
  std::vector<Tensor<T>> v(parts);
  return concat<T>(std::span<const Tensor<T>>(v), axis);
}
template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::initializer_list<int> axes) {
  std::vector<int> v(axes);
  return permute<T>(x, std::span<const int>(v));
}

}  // namespace stp::ops
