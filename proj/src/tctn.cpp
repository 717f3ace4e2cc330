#include "stpred/tctn.hpp"

#include <cmath>
#include <limits>

#include "stpred/ops.hpp"

namespace stp::tctn {

template <typename T>
Tensor<T> positional_embedding(Index steps, Index height, Index width, Index dim) {
  if (dim % 2) throw ShapeError("positional_embedding: D must be even, got " + std::to_string(dim));
  Tensor<T> p({steps, height, width, dim});
  auto out = p.mutable_data();
  for (Index j = 0; j < steps; ++j)
    for (Index d = 0; d < dim / 2; ++d) {
      const double angle = static_cast<double>(j) / std::pow(10000.0, 2.0 * d / static_cast<double>(dim));
      const T s = static_cast<T>(std::sin(angle)), c = static_cast<T>(std::cos(angle));
      for (Index site = 0; site < height * width; ++site) {
        out[(j * height * width + site) * dim + 2 * d] = s;
        out[(j * height * width + site) * dim + 2 * d + 1] = c;
      }
    }
  return p;
}

template <typename T>
Tensor<T> causal_mask(Index steps) {
  Tensor<T> m({steps, steps});
  for (Index q = 0; q < steps; ++q)
    for (Index k = q + 1; k < steps; ++k) m.mutable_data()[q * steps + k] = -std::numeric_limits<T>::infinity();
  return m;
}

template <typename T>
TCTNLayerParams<T> TCTNLayerParams<T>::init(const TCTNConfig& cfg, Rng& rng) {
  const Index c = cfg.channels, e = cfg.channels * cfg.ffn_expand, k = cfg.kernel;
  if (k % 2 == 0) throw ShapeError("tctn: kernel size must be odd, got " + std::to_string(k));
  auto conv = [&](Index out, Index in) { return kernel_param<T>({out, in, k, k, k}, rng); };
  auto zeros = [](Index n) { return constant_param<T>({n}, T(0)); };
  auto ln = [&] { return LayerNormParams<T>{constant_param<T>({c}, T(1)), zeros(c)}; };
  TCTNLayerParams p;
  p.w_q = conv(c, c), p.b_q = zeros(c);
  p.w_k = conv(c, c), p.b_k = zeros(c);
  p.w_v = conv(c, c), p.b_v = zeros(c);
  p.w_2 = conv(e, c), p.b_2 = zeros(e);
  p.w_1 = conv(c, e), p.b_1 = zeros(c);
  p.ln_e = ln(), p.ln_a = ln(), p.ln_s = ln();
  return p;
}

template <typename T>
ParamList<T> TCTNLayerParams<T>::named(const std::string& prefix) const {
  return {{prefix + "W_q", w_q},           {prefix + "b_q", b_q},          {prefix + "W_k", w_k},
          {prefix + "b_k", b_k},           {prefix + "W_v", w_v},          {prefix + "b_v", b_v},
          {prefix + "W_2", w_2},           {prefix + "b_2", b_2},          {prefix + "W_1", w_1},
          {prefix + "b_1", b_1},           {prefix + "ln_e.gamma", ln_e.gamma}, {prefix + "ln_e.beta", ln_e.beta},
          {prefix + "ln_a.gamma", ln_a.gamma}, {prefix + "ln_a.beta", ln_a.beta},
          {prefix + "ln_s.gamma", ln_s.gamma}, {prefix + "ln_s.beta", ln_s.beta}};
}

namespace {

// Per-timestep layer norm over (C, H, W) with per-channel affine, on [N, S, C, H, W].
template <typename T>
Tensor<T> norm(const Tensor<T>& x, const LayerNormParams<T>& p, const TCTNConfig& cfg) {
  return ops::scale_shift(ops::layer_norm(x, 3, static_cast<T>(cfg.ln_eps)), p.gamma, p.beta, 2);
}

// Causal, spatially same-padded 3-D convolution on time-major [N, S, C, H, W].
template <typename T>
Tensor<T> causal_conv(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b) {
  const Index pad = (k.dim(3) - 1) / 2;
  ops::Conv3dOptions opt;
  opt.padding = {0, pad, pad};
  opt.causal_time = true;
  const auto y = ops::conv3d(ops::permute(x, {0, 2, 1, 3, 4}), k, b, opt);
  return ops::permute(y, {0, 2, 1, 3, 4});
}

template <typename T>
void require_layer_input(const Tensor<T>& e, const TCTNConfig& cfg) {
  require_sequence(e.shape(), cfg.channels, "tctn layer");
}

}  // namespace

template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  const auto y = ops::conv3d(ops::permute(x, {0, 2, 1, 3, 4}), kernel, bias);
  return ops::permute(y, {0, 2, 1, 3, 4});
}

template <typename T>
AttentionResult<T> masked_conv_attention(const Tensor<T>& e, const TCTNLayerParams<T>& p, const TCTNConfig& cfg) {
  require_layer_input(e, cfg);
  const Index n = e.dim(0), s = e.dim(1), features = e.dim(2) * e.dim(3) * e.dim(4);
  const auto e_hat = norm(e, p.ln_e, cfg);
  auto flat = [&](const Tensor<T>& t) { return ops::reshape(t, {n, s, features}); };
  const auto q = flat(causal_conv(e_hat, p.w_q, p.b_q));
  const auto k = flat(causal_conv(e_hat, p.w_k, p.b_k));
  const auto v = flat(causal_conv(e_hat, p.w_v, p.b_v));
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.channels)));
  const auto scores = ops::scale(ops::matmul(q, k, false, true), inv_sqrt);
  AttentionResult<T> out;
  out.weights = ops::masked_softmax(scores, causal_mask<T>(s));
  out.a = ops::reshape(ops::matmul(out.weights, v), e.shape());
  return out;
}

template <typename T>
Tensor<T> decoder_layer(const Tensor<T>& e, const TCTNLayerParams<T>& p, const TCTNConfig& cfg) {
  const auto a = masked_conv_attention(e, p, cfg).a;
  const auto s = ops::add(e, norm(a, p.ln_a, cfg));
  const auto s_hat = norm(s, p.ln_s, cfg);
  const auto hidden = ops::leaky_relu(causal_conv(s_hat, p.w_2, p.b_2), static_cast<T>(cfg.leak));
  return ops::add(s, causal_conv(hidden, p.w_1, p.b_1));
}

template <typename T>
TCTNPredictor<T>::TCTNPredictor(const TCTNConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.layers < 1) throw ShapeError("tctn: need at least one layer");
  if (cfg.input_dim % 2) throw ShapeError("tctn: latent dim must be even for the positional embedding");
  Rng rng(seed);
  in_w_ = kernel_param<T>({cfg.channels, cfg.input_dim, 1, 1, 1}, rng);
  in_b_ = constant_param<T>({cfg.channels}, T(0));
  for (Index l = 0; l < cfg.layers; ++l) layers_.push_back(TCTNLayerParams<T>::init(cfg, rng));
  out_w_ = kernel_param<T>({cfg.input_dim, cfg.channels, 1, 1, 1}, rng);
  out_b_ = constant_param<T>({cfg.input_dim}, T(0));
}

template <typename T>
Tensor<T> TCTNPredictor<T>::forward(const Tensor<T>& z) const {
  require_sequence(z.shape(), cfg_.input_dim, "tctn");
  const Index n = z.dim(0), s = z.dim(1), d = z.dim(2), h = z.dim(3), w = z.dim(4);
  // Same table for every batch item, laid out [N, S, D', H', W'].
  const auto table = ops::permute(positional_embedding<T>(s, h, w, d), {0, 3, 1, 2});
  std::vector<T> tiled;
  tiled.reserve(static_cast<std::size_t>(z.numel()));
  for (Index b = 0; b < n; ++b) tiled.insert(tiled.end(), table.data().begin(), table.data().end());
  const auto e = ops::add(z, Tensor<T>(z.shape(), std::move(tiled)));
  auto x = pointwise(e, in_w_, in_b_);
  for (const auto& layer : layers_) x = decoder_layer(x, layer, cfg_);
  return pointwise(x, out_w_, out_b_);
}

template <typename T>
Tensor<T> TCTNPredictor<T>::forward_train(const Tensor<T>& sequence, const std::vector<bool>&) const {
  require_sequence(sequence.shape(), cfg_.input_dim, "tctn");
  if (sequence.dim(1) < 2) throw ShapeError("tctn: sequence needs at least 2 steps");
  return forward(ops::slice(sequence, 1, 0, sequence.dim(1) - 1));
}

template <typename T>
Tensor<T> TCTNPredictor<T>::rollout(const Tensor<T>& context, Index horizon) const {
  require_sequence(context.shape(), cfg_.input_dim, "tctn rollout");
  if (horizon < 1) throw ShapeError("tctn rollout: horizon must be >= 1");
  Tensor<T> seq = context;
  std::vector<Tensor<T>> out;
  for (Index k = 0; k < horizon; ++k) {
    const Index s = seq.dim(1);
    auto next = ops::slice(forward(seq), 1, s - 1, s);
    out.push_back(next);
    if (k + 1 < horizon) seq = ops::concat({seq, next}, 1);
  }
  return ops::concat(std::span<const Tensor<T>>(out), 1);
}

template <typename T>
ParamList<T> TCTNPredictor<T>::parameters() const {
  ParamList<T> p{{"tctn.input.W", in_w_}, {"tctn.input.b", in_b_}};
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto named = layers_[l].named("tctn.layer" + std::to_string(l) + ".");
    p.insert(p.end(), named.begin(), named.end());
  }
  p.emplace_back("tctn.head.W", out_w_);
  p.emplace_back("tctn.head.b", out_b_);
  return p;
}

#define STP_TCTN(T)                                                                                          \
  template Tensor<T> positional_embedding<T>(Index, Index, Index, Index);                                    \
  template Tensor<T> causal_mask<T>(Index);                                                                  \
  template struct TCTNLayerParams<T>;                                                                        \
  template AttentionResult<T> masked_conv_attention<T>(const Tensor<T>&, const TCTNLayerParams<T>&,          \
                                                       const TCTNConfig&);                                   \
  template Tensor<T> decoder_layer<T>(const Tensor<T>&, const TCTNLayerParams<T>&, const TCTNConfig&);       \
  template Tensor<T> pointwise<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template class TCTNPredictor<T>;

STP_TCTN(float)
STP_TCTN(double)

}  // namespace stp::tctn
