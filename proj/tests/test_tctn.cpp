#include <cmath>

#include "doctest.h"
#include "stpred/ops.hpp"
#include "stpred/tctn.hpp"
#include "test_util.hpp"

using namespace stp;
using namespace stp::tctn;
using stp::testing::gradcheck;
using stp::testing::random_tensor;

namespace {

TCTNConfig toy(Index channels, Index layers = 1) {
  TCTNConfig cfg;
  cfg.input_dim = 2;
  cfg.channels = channels;
  cfg.layers = layers;
  return cfg;
}

void randomize(TCTNLayerParams<double>& p, Rng& rng) {
  for (auto& [n, t] : p.named(""))
    for (auto& v : t.mutable_data()) v = rng.uniform(-0.5, 0.5);
}

// Two-pass per-timestep normalization of [N,S,C,H,W] then per-channel affine; result as [N,C,S,H,W].
Tensor<double> naive_norm_cmajor(const Tensor<double>& e, const LayerNormParams<double>& p, double eps) {
  const Index n = e.dim(0), s = e.dim(1), c = e.dim(2), hw = e.dim(3) * e.dim(4);
  Tensor<double> out({n, c, s, e.dim(3), e.dim(4)});
  for (Index b = 0; b < n; ++b)
    for (Index t = 0; t < s; ++t) {
      const Index base = (b * s + t) * c * hw;
      double mu = 0, var = 0;
      for (Index i = 0; i < c * hw; ++i) mu += e[base + i];
      mu /= static_cast<double>(c * hw);
      for (Index i = 0; i < c * hw; ++i) var += (e[base + i] - mu) * (e[base + i] - mu);
      var /= static_cast<double>(c * hw);
      for (Index ch = 0; ch < c; ++ch)
        for (Index i = 0; i < hw; ++i)
          out.mutable_data()[((b * c + ch) * s + t) * hw + i] =
              (e[base + ch * hw + i] - mu) / std::sqrt(var + eps) * p.gamma[ch] + p.beta[ch];
    }
  return out;
}

// Attention weights [N,S,S] via explicit loops over query/key pairs.
std::vector<double> naive_weights(const Tensor<double>& e, const TCTNLayerParams<double>& p, const TCTNConfig& cfg) {
  const Index n = e.dim(0), s = e.dim(1), c = e.dim(2), hw = e.dim(3) * e.dim(4);
  auto x = naive_norm_cmajor(e, p.ln_e, cfg.ln_eps);
  auto q = testing::naive_conv3d(x, p.w_q, cfg.kernel - 1, 0, cfg.kernel / 2);
  auto k = testing::naive_conv3d(x, p.w_k, cfg.kernel - 1, 0, cfg.kernel / 2);
  std::vector<double> w(static_cast<std::size_t>(n * s * s), 0.0);
  for (Index b = 0; b < n; ++b)
    for (Index i = 0; i < s; ++i) {
      std::vector<double> row(static_cast<std::size_t>(i + 1));
      for (Index j = 0; j <= i; ++j) {
        double dot = 0;
        for (Index ch = 0; ch < c; ++ch)
          for (Index site = 0; site < hw; ++site) {
            const Index qi = ((b * c + ch) * s + i) * hw + site, kj = ((b * c + ch) * s + j) * hw + site;
            dot += (q[qi] + p.b_q[ch]) * (k[kj] + p.b_k[ch]);
          }
        row[j] = dot / std::sqrt(static_cast<double>(c));
      }
      double mx = row[0], z = 0;
      for (double r : row) mx = std::max(mx, r);
      for (double r : row) z += std::exp(r - mx);
      for (Index j = 0; j <= i; ++j) w[(b * s + i) * s + j] = std::exp(row[j] - mx) / z;
    }
  return w;
}

}  // namespace

TEST_CASE("positional embedding: closed form, j=0 row, site independence") {
  auto p = positional_embedding<double>(16, 2, 3, 8);
  CHECK(p.shape() == Shape{16, 2, 3, 8});
  for (Index d = 0; d < 8; ++d) CHECK(p[d] == (d % 2 ? 1.0 : 0.0));
  CHECK(std::abs(p[(1 * 6) * 8 + 0] - 0.841471) < 1e-6);
  double worst = 0;
  for (Index j = 0; j < 16; ++j)
    for (Index site = 0; site < 6; ++site)
      for (Index d = 0; d < 8; ++d) {
        const long double freq = std::exp(-static_cast<long double>(d - d % 2) / 8.0L * std::log(10000.0L));
        const long double arg = static_cast<long double>(j) * freq;
        const double expect = static_cast<double>(d % 2 ? std::cos(arg) : std::sin(arg));
        const double got = p[(j * 6 + site) * 8 + d];
        worst = std::max(worst, std::abs(got - expect));
        CHECK(got == p[(j * 6) * 8 + d]);
        CHECK(std::abs(got) <= 1.0);
      }
  CHECK(worst < 1e-7);
  auto pf = positional_embedding<float>(16, 1, 1, 8);
  for (Index i = 0; i < pf.numel(); ++i) CHECK(std::abs(pf[i] - p[(i / 8) * 48 + i % 8]) < 1e-7);
  CHECK_THROWS_AS(positional_embedding<double>(4, 1, 1, 7), ShapeError);
}

TEST_CASE("causal mask") {
  auto m = causal_mask<double>(3);
  for (Index q = 0; q < 3; ++q)
    for (Index k = 0; k < 3; ++k) {
      if (k <= q) CHECK(m[q * 3 + k] == 0.0);
      else CHECK(std::isinf(m[q * 3 + k]));
    }
}

TEST_CASE("attention: one step, zero queries, naive oracle") {
  auto cfg = toy(3);
  Rng rng(1);
  auto p = TCTNLayerParams<double>::init(cfg, rng);
  randomize(p, rng);

  auto e1 = random_tensor<double>({2, 1, 3, 2, 2}, rng);
  auto r1 = masked_conv_attention(e1, p, cfg);
  for (double w : r1.weights.data()) CHECK(w == 1.0);
  // A equals V: the value convolution applied directly.
  auto x = naive_norm_cmajor(e1, p.ln_e, cfg.ln_eps);
  auto v = testing::naive_conv3d(x, p.w_v, 2, 0, 1);
  for (Index b = 0; b < 2; ++b)
    for (Index c = 0; c < 3; ++c)
      for (Index i = 0; i < 4; ++i)
        CHECK(std::abs(r1.a[(b * 3 + c) * 4 + i] - (v[(b * 3 + c) * 4 + i] + p.b_v[c])) < 1e-12);

  auto zq = p;
  zq.w_q = Tensor<double>(p.w_q.shape());
  zq.b_q = Tensor<double>(p.b_q.shape());
  auto e4 = random_tensor<double>({1, 4, 3, 2, 2}, rng);
  auto uni = masked_conv_attention(e4, zq, cfg).weights;
  for (Index q = 0; q < 4; ++q)
    for (Index k = 0; k < 4; ++k) CHECK(uni[q * 4 + k] == doctest::Approx(k <= q ? 1.0 / (q + 1) : 0.0));

  for (int trial = 0; trial < 5; ++trial) {
    auto e = random_tensor<double>({2, 4, 3, 3, 2}, rng);
    auto w = masked_conv_attention(e, p, cfg).weights;
    auto expect = naive_weights(e, p, cfg);
    CHECK(testing::max_abs_diff(w.data(), expect) < 1e-5);
    for (Index b = 0; b < 2; ++b)
      for (Index q = 0; q < 4; ++q) {
        double row = 0;
        for (Index k = 0; k < 4; ++k) {
          row += w[(b * 4 + q) * 4 + k];
          if (k > q) CHECK(w[(b * 4 + q) * 4 + k] == 0.0);
        }
        CHECK(std::abs(row - 1.0) < 1e-12);
      }
  }
  CHECK_THROWS_AS(masked_conv_attention(random_tensor<double>({1, 2, 4, 2, 2}, rng), p, cfg), ShapeError);
}

TEST_CASE("decoder layer: zero value and FFN weights pass E through") {
  auto cfg = toy(4);
  Rng rng(2);
  auto p = TCTNLayerParams<double>::init(cfg, rng);
  randomize(p, rng);
  for (auto* t : {&p.w_v, &p.b_v, &p.w_1, &p.b_1, &p.w_2, &p.b_2})
    for (auto& v : t->mutable_data()) v = 0;
  for (auto& v : p.ln_a.beta.mutable_data()) v = 0;
  auto e = random_tensor<double>({2, 3, 4, 2, 2}, rng);
  auto out = decoder_layer(e, p, cfg);
  CHECK(out.shape() == e.shape());
  CHECK(out.vec() == e.vec());
}

TEST_CASE("decoder layer and full model pass finite differences") {
  auto cfg = toy(4);
  Rng rng(3);
  auto p = TCTNLayerParams<double>::init(cfg, rng);
  randomize(p, rng);
  auto e = random_tensor<double>({1, 3, 4, 2, 2}, rng);
  std::vector<Tensor<double>> inputs{e};
  for (auto& [n, t] : p.named("")) inputs.push_back(t);
  auto target = random_tensor<double>({1, 3, 4, 2, 2}, rng);
  auto f = [&](const std::vector<Tensor<double>>&) { return ops::mse_loss(decoder_layer(e, p, cfg), target); };
  CHECK(gradcheck(f, inputs) < 1e-4);

  TCTNPredictor<double> model(toy(4, 2), 4);
  auto seq = random_tensor<double>({2, 4, 2, 2, 2}, rng);
  std::vector<Tensor<double>> params{seq};
  for (auto& [n, t] : model.parameters()) params.push_back(t);
  auto g = [&](const std::vector<Tensor<double>>&) {
    return ops::mse_loss(model.forward_train(seq, {}), ops::slice(seq, 1, 1, 4));
  };
  CHECK(gradcheck(g, params) < 1e-4);
}

TEST_CASE("causality: a change at t never reaches outputs before t (50 configurations)") {
  Rng rng(5);
  Index leaks = 0, silent = 0;
  for (int trial = 0; trial < 50; ++trial) {
    TCTNConfig cfg;
    cfg.input_dim = 2 * (1 + static_cast<Index>(rng.below(2)));
    cfg.channels = 2 + static_cast<Index>(rng.below(4));
    cfg.layers = 1 + static_cast<Index>(rng.below(3));
    TCTNPredictor<double> model(cfg, rng.next());
    const Index n = 1 + static_cast<Index>(rng.below(2)), s = 2 + static_cast<Index>(rng.below(5));
    const Index h = 1 + static_cast<Index>(rng.below(3)), w = 1 + static_cast<Index>(rng.below(3));
    auto z = random_tensor<double>({n, s, cfg.input_dim, h, w}, rng);
    auto base = model.forward(z);
    const Index t = static_cast<Index>(rng.below(static_cast<std::uint64_t>(s)));
    auto moved = z.detach();
    const Index per_step = cfg.input_dim * h * w;
    for (Index b = 0; b < n; ++b)
      for (Index i = 0; i < per_step; ++i) moved.mutable_data()[(b * s + t) * per_step + i] += rng.uniform(-2, 2);
    auto out = model.forward(moved);
    bool changed_at_t = false;
    for (Index b = 0; b < n; ++b)
      for (Index u = 0; u < s; ++u)
        for (Index i = 0; i < per_step; ++i) {
          const Index at = (b * s + u) * per_step + i;
          if (u < t && out[at] != base[at]) ++leaks;
          if (u == t && out[at] != base[at]) changed_at_t = true;
        }
    silent += !changed_at_t;
  }
  CHECK(leaks == 0);
  CHECK(silent == 0);
}

TEST_CASE("forward: shapes, order sensitivity, rollout agreement") {
  TCTNPredictor<double> model(toy(4, 2), 6);
  Rng rng(7);
  auto z = random_tensor<double>({2, 5, 2, 3, 3}, rng);
  auto y = model.forward(z);
  CHECK(y.shape() == z.shape());
  CHECK(model.forward_train(z, {}).shape() == Shape{2, 4, 2, 3, 3});

  auto swapped = z.detach();
  const Index step = 18;
  for (Index b = 0; b < 2; ++b)
    for (Index i = 0; i < step; ++i)
      std::swap(swapped.mutable_data()[(b * 5 + 1) * step + i], swapped.mutable_data()[(b * 5 + 3) * step + i]);
  auto ys = model.forward(swapped);
  double diff = 0;
  for (Index b = 0; b < 2; ++b)
    for (Index i = 0; i < step; ++i) diff += std::abs(ys[(b * 5 + 4) * step + i] - y[(b * 5 + 4) * step + i]);
  CHECK(diff > 0);

  auto ctx = ops::slice(z, 1, 0, 3);
  auto r1 = model.rollout(ctx, 1);
  CHECK(r1.vec() == ops::slice(model.forward(ctx), 1, 2, 3).vec());
  auto r = model.rollout(ctx, 4);
  CHECK(r.shape() == Shape{2, 4, 2, 3, 3});
  CHECK(model.rollout(ctx, 4).vec() == r.vec());
  CHECK_THROWS_AS(model.forward_train(ops::slice(z, 1, 0, 1), {}), ShapeError);
  CHECK_THROWS_AS(model.rollout(ctx, 0), ShapeError);
}
