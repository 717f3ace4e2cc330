#include "stpred/vqvae.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "stpred/ops.hpp"

namespace stp::vq {

template <typename T>
std::vector<std::int32_t> nearest_indices(const Tensor<T>& z_e, const Tensor<T>& entries) {
  if (z_e.rank() != 4) throw ShapeError("quantize: z_e must be [N,D,H,W], got " + shape_str(z_e.shape()));
  if (entries.rank() != 2 || entries.dim(1) != z_e.dim(1))
    throw ShapeError("quantize: codebook " + shape_str(entries.shape()) + " does not match latent dim " +
                     std::to_string(z_e.dim(1)));
  const Index n = z_e.dim(0), d = z_e.dim(1), sites = z_e.dim(2) * z_e.dim(3), k = entries.dim(0);
  const auto& z = z_e.vec();
  const auto& e = entries.vec();
  std::vector<std::int32_t> out(static_cast<std::size_t>(n * sites));
  std::vector<T> v(static_cast<std::size_t>(d));
  for (Index b = 0; b < n; ++b)
    for (Index s = 0; s < sites; ++s) {
      for (Index c = 0; c < d; ++c) v[c] = z[(b * d + c) * sites + s];
      T best = std::numeric_limits<T>::infinity();
      std::int32_t arg = 0;
      for (Index j = 0; j < k; ++j) {
        T dist = 0;
        for (Index c = 0; c < d; ++c) {
          const T diff = v[c] - e[j * d + c];
          dist += diff * diff;
        }
        if (dist < best) {
          best = dist;
          arg = static_cast<std::int32_t>(j);
        }
      }
      out[b * sites + s] = arg;
    }
  return out;
}

template <typename T>
Tensor<T> straight_through(const Tensor<T>& z_e, const Tensor<T>& z_q) {
  if (z_e.shape() != z_q.shape())
    throw ShapeError("straight_through: " + shape_str(z_e.shape()) + " vs " + shape_str(z_q.shape()));
  std::vector<Tensor<T>> in{z_e};
  return make_op_result<T>("straight_through", z_q.shape(), z_q.vec(), in, [z_e](std::span<const T> g) {
    auto s = grad_slot(z_e);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
  });
}

double codebook_usage(std::span<const std::int32_t> indices, Index codebook_size) {
  if (codebook_size <= 0) throw ShapeError("codebook_usage: codebook size must be positive");
  std::set<std::int32_t> used(indices.begin(), indices.end());
  return static_cast<double>(used.size()) / static_cast<double>(codebook_size);
}

template <typename T>
VQVAE<T>::VQVAE(const VQConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.codebook_size < 2) throw ShapeError("vqvae: codebook needs at least 2 entries");
  Rng rng(seed);
  const Index c = cfg.in_channels, h = cfg.hidden, d = cfg.latent_dim;
  auto conv = [&](Index out, Index in, Index k) {
    return Conv{kernel_param<T>({out, in, k, k}, rng), constant_param<T>({out}, T(0))};
  };
  auto res = [&] { return Residual{conv(h, h, 3), conv(h, h, 1)}; };
  enc1_ = conv(h, c, 4);
  enc2_ = conv(h, h, 4);
  for (Index i = 0; i < cfg.res_blocks; ++i) enc_res_.push_back(res());
  enc_proj_ = conv(d, h, 1);
  dec_in_ = conv(h, d, 3);
  for (Index i = 0; i < cfg.res_blocks; ++i) dec_res_.push_back(res());
  // Transposed kernels are [C_in, C_out, kh, kw]; fan-in is taken over what feeds one output.
  dec_up1_ = Conv{uniform_param<T>({h, h, 4, 4}, 1.0 / std::sqrt(double(h * 4)), rng), constant_param<T>({h}, T(0))};
  dec_up2_ = Conv{uniform_param<T>({h, c, 4, 4}, 1.0 / std::sqrt(double(h * 4)), rng), constant_param<T>({c}, static_cast<T>(cfg.output_bias))};
  const double bound = 1.0 / static_cast<double>(cfg.codebook_size);
  codebook_.entries = uniform_param<T>({cfg.codebook_size, d}, bound, rng);
}

template <typename T>
Tensor<T> VQVAE<T>::act(const Tensor<T>& x) const {
  return ops::leaky_relu(x, static_cast<T>(cfg_.leak));
}

template <typename T>
Tensor<T> VQVAE<T>::residual(const Residual& r, const Tensor<T>& x) const {
  auto y = act(ops::conv2d(x, r.c3.kernel, r.c3.bias, 1, 1));
  return ops::add(x, ops::conv2d(y, r.c1.kernel, r.c1.bias));
}

template <typename T>
Tensor<T> VQVAE<T>::encode(const Tensor<T>& frames) const {
  if (frames.rank() != 4 || frames.dim(1) != cfg_.in_channels)
    throw ShapeError("encode: expected [N," + std::to_string(cfg_.in_channels) + ",H,W], got " +
                     shape_str(frames.shape()));
  if (frames.dim(2) % kDownsample || frames.dim(3) % kDownsample)
    throw ShapeError("encode: spatial extents " + shape_str(frames.shape()) + " not divisible by " +
                     std::to_string(kDownsample));
  auto x = act(ops::conv2d(frames, enc1_.kernel, enc1_.bias, 2, 1));
  x = act(ops::conv2d(x, enc2_.kernel, enc2_.bias, 2, 1));
  for (const auto& r : enc_res_) x = residual(r, x);
  return ops::conv2d(x, enc_proj_.kernel, enc_proj_.bias);
}

template <typename T>
VQOutput<T> VQVAE<T>::quantize(const Tensor<T>& z_e) const {
  VQOutput<T> out;
  out.z_e = z_e;
  out.indices = nearest_indices(z_e, codebook_.entries);
  out.z_q = ops::embed_grid(codebook_.entries, out.indices, z_e.dim(0), z_e.dim(2), z_e.dim(3));
  return out;
}

template <typename T>
Tensor<T> VQVAE<T>::requantize(const Tensor<T>& z) const {
  NoGradScope<T> guard;
  return quantize(z.detach()).z_q;
}

template <typename T>
Tensor<T> VQVAE<T>::decode(const Tensor<T>& z) const {
  if (z.rank() != 4 || z.dim(1) != cfg_.latent_dim)
    throw ShapeError("decode: expected [N," + std::to_string(cfg_.latent_dim) + ",H',W'], got " +
                     shape_str(z.shape()));
  auto x = ops::conv2d(z, dec_in_.kernel, dec_in_.bias, 1, 1);
  for (const auto& r : dec_res_) x = residual(r, x);
  x = act(x);
  x = act(ops::conv2d_transpose(x, dec_up1_.kernel, dec_up1_.bias, 2, 1));
  return ops::sigmoid(ops::conv2d_transpose(x, dec_up2_.kernel, dec_up2_.bias, 2, 1));
}

template <typename T>
typename VQVAE<T>::Forward VQVAE<T>::forward(const Tensor<T>& frames, const VQLossWeights& weights) const {
  if (!std::isfinite(weights.beta) || weights.beta < 0) throw ShapeError("vq loss: beta must be finite and >= 0");
  Forward f;
  auto z_e = encode(frames);
  f.vq = quantize(z_e);
  f.reconstruction = decode(straight_through(z_e, f.vq.z_q));
  // Latent terms: squared norm over channels, averaged over batch and sites.
  const T per_site = static_cast<T>(z_e.dim(1));
  auto codebook_term = ops::scale(ops::mse_loss(ops::stop_gradient(z_e), f.vq.z_q), per_site);
  auto commit_term = ops::scale(ops::mse_loss(z_e, ops::stop_gradient(f.vq.z_q)), per_site);
  auto recon = ops::mse_loss(frames, f.reconstruction);
  f.loss = ops::add(ops::add(recon, codebook_term), ops::scale(commit_term, static_cast<T>(weights.beta)));
  f.values.reconstruction = static_cast<double>(recon.item());
  f.values.codebook = static_cast<double>(codebook_term.item());
  f.values.commitment = static_cast<double>(commit_term.item());
  f.values.total = static_cast<double>(f.loss.item());
  return f;
}

template <typename T>
ParamList<T> VQVAE<T>::parameters() const {
  ParamList<T> p;
  p.emplace_back("vqvae.codebook", codebook_.entries);
  auto add = [&](const std::string& name, const Conv& c) {
    p.emplace_back("vqvae." + name + ".weight", c.kernel);
    p.emplace_back("vqvae." + name + ".bias", c.bias);
  };
  add("enc1", enc1_);
  add("enc2", enc2_);
  for (std::size_t i = 0; i < enc_res_.size(); ++i) {
    add("enc_res" + std::to_string(i) + ".conv3", enc_res_[i].c3);
    add("enc_res" + std::to_string(i) + ".conv1", enc_res_[i].c1);
  }
  add("enc_proj", enc_proj_);
  add("dec_in", dec_in_);
  for (std::size_t i = 0; i < dec_res_.size(); ++i) {
    add("dec_res" + std::to_string(i) + ".conv3", dec_res_[i].c3);
    add("dec_res" + std::to_string(i) + ".conv1", dec_res_[i].c1);
  }
  add("dec_up1", dec_up1_);
  add("dec_up2", dec_up2_);
  return p;
}

template <typename T>
Index VQVAE<T>::trainable_count() const {
  return frozen_ ? 0 : param_count(parameters());
}

template <typename T>
void VQVAE<T>::freeze() {
  auto p = parameters();
  set_trainable(p, false);
  frozen_ = true;
}

template <typename T>
VQLossValues vq_train_step(VQVAE<T>& model, Adam<T>& opt, const Tensor<T>& frames, const VQLossWeights& weights) {
  if (model.frozen()) throw GradError("vq_train_step: codec is frozen");
  Tape<T> tape;
  typename VQVAE<T>::Forward f;
  {
    TapeScope<T> scope(tape);
    f = model.forward(frames, weights);
  }
  opt.zero_grad();
  tape.backward(f.loss);
  opt.step();
  return f.values;
}

#define STP_VQ(T)                                                                                    \
  template std::vector<std::int32_t> nearest_indices<T>(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> straight_through<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template class VQVAE<T>;                                                                           \
  template VQLossValues vq_train_step<T>(VQVAE<T>&, Adam<T>&, const Tensor<T>&, const VQLossWeights&);

STP_VQ(float)
STP_VQ(double)

}  // namespace stp::vq
