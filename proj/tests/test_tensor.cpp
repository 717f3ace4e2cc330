#include <cmath>
#include <limits>

#include "doctest.h"
#include "stpred/ops.hpp"
#include "stpred/optim.hpp"
#include "test_util.hpp"

using namespace stp;
using stp::testing::gradcheck;
using stp::testing::max_abs_diff;
using stp::testing::random_tensor;
using D = double;

TEST_CASE("conv2d: identity and window-sum kernels") {
  Tensor<D> ones({1, 1, 3, 3}, 1.0);
  Tensor<D> k1({1, 1, 1, 1}, 1.0);
  auto y = ops::conv2d(ones, k1);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  for (D v : y.data()) CHECK(v == 1.0);

  Tensor<D> x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<D> k({1, 1, 2, 2}, 1.0);
  auto s = ops::conv2d(x, k);
  CHECK(s.shape() == Shape{1, 1, 1, 1});
  CHECK(s.item() == 10.0);
}

TEST_CASE("conv2d: stride 2 pad 1 matches naive loops") {
  Rng rng(7);
  auto x = random_tensor<D>({2, 3, 8, 8}, rng);
  auto k = random_tensor<D>({4, 3, 3, 3}, rng);
  auto y = ops::conv2d(x, k, {}, 2, 1);
  CHECK(y.shape() == Shape{2, 4, 4, 4});
  auto ref = stp::testing::naive_conv2d(x, k, 2, 1);
  CHECK(max_abs_diff(y.data(), std::span<const D>(ref)) < 1e-6);
}

TEST_CASE("conv2d: shape errors name the axes") {
  Tensor<D> x({1, 2, 4, 4});
  Tensor<D> k({1, 3, 3, 3});
  CHECK_THROWS_AS(ops::conv2d(x, k), ShapeError);
  try {
    ops::conv2d(x, k);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("axis 1") != std::string::npos);
  }
  Tensor<D> big({1, 2, 5, 5});
  Tensor<D> small({1, 2, 2, 2});
  CHECK_THROWS_AS(ops::conv2d(small, Tensor<D>({1, 2, 2, 5})), ShapeError);
  (void)big;
}

TEST_CASE("conv2d_transpose: examples and adjointness") {
  Tensor<D> px({1, 1, 1, 1}, 5.0);
  auto y = ops::conv2d_transpose(px, Tensor<D>({1, 1, 2, 2}, 1.0));
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (D v : y.data()) CHECK(v == 5.0);

  auto z = ops::conv2d_transpose(Tensor<D>({1, 1, 2, 2}, 1.0), Tensor<D>({1, 1, 2, 2}, 1.0), {}, 2, 0);
  CHECK(z.shape() == Shape{1, 1, 4, 4});
  for (D v : z.data()) CHECK(v == 1.0);

  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    // conv: [2,3,8,8] -> [2,4,4,4] with stride 2 pad 1, kernel [4,3,4,4]
    auto x = random_tensor<D>({2, 3, 8, 8}, rng);
    auto k = random_tensor<D>({4, 3, 4, 4}, rng);
    auto cx = ops::conv2d(x, k, {}, 2, 1);
    auto yy = random_tensor<D>(cx.shape(), rng);
    // transposed conv uses the same kernel viewed as [C_in=4, O=3, ...]
    auto ty = ops::conv2d_transpose(yy, k, {}, 2, 1);
    REQUIRE(ty.shape() == x.shape());
    D lhs = 0, rhs = 0;
    for (Index i = 0; i < cx.numel(); ++i) lhs += cx[i] * yy[i];
    for (Index i = 0; i < x.numel(); ++i) rhs += x[i] * ty[i];
    CHECK(std::abs(lhs - rhs) < 1e-6 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("conv2d_transpose equals the input gradient of conv2d") {
  Rng rng(3);
  auto x = random_tensor<D>({1, 2, 6, 6}, rng).set_requires_grad(true);
  auto k = random_tensor<D>({3, 2, 3, 3}, rng);
  auto up = random_tensor<D>({1, 3, 3, 3}, rng);
  Tape<D> tape;
  Tensor<D> loss;
  {
    TapeScope<D> s(tape);
    loss = ops::sum(ops::mul(ops::conv2d(x, k, {}, 2, 1), up));
  }
  tape.backward(loss);
  auto t = ops::conv2d_transpose(up, k, {}, 2, 1);
  // H' = (3-1)*2 - 2 + 3 = 5; the sixth row/column receives no contribution from a stride-2 conv
  REQUIRE(t.shape() == Shape{1, 2, 5, 5});
  for (Index c = 0; c < 2; ++c)
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j)
        CHECK(std::abs(x.grad()[(c * 6 + i) * 6 + j] - t[(c * 5 + i) * 5 + j]) < 1e-12);
}

TEST_CASE("conv3d: identity, naive oracle, causality") {
  Rng rng(5);
  auto x = random_tensor<D>({1, 2, 4, 4, 4}, rng);
  auto id = ops::conv3d(random_tensor<D>({1, 1, 3, 2, 2}, rng), Tensor<D>({1, 1, 1, 1, 1}, 1.0));
  CHECK(id.shape() == Shape{1, 1, 3, 2, 2});

  auto k = random_tensor<D>({3, 2, 3, 3, 3}, rng);
  ops::Conv3dOptions same;
  same.padding = {1, 1, 1};
  auto y = ops::conv3d(x, k, {}, same);
  auto ref = stp::testing::naive_conv3d(x, k, 1, 1, 1);
  CHECK(max_abs_diff(y.data(), std::span<const D>(ref)) < 1e-6);

  ops::Conv3dOptions causal;
  causal.padding = {0, 1, 1};
  causal.causal_time = true;
  auto yc = ops::conv3d(x, k, {}, causal);
  CHECK(yc.shape() == Shape{1, 3, 4, 4, 4});
  auto refc = stp::testing::naive_conv3d(x, k, 2, 0, 1);
  CHECK(max_abs_diff(yc.data(), std::span<const D>(refc)) < 1e-6);

  auto x2 = x.clone();
  auto d = x2.mutable_data();
  for (Index c = 0; c < 2; ++c)
    for (Index s = 0; s < 16; ++s) d[(c * 4 + 3) * 16 + s] = 0.0;
  auto yc2 = ops::conv3d(x2, k, {}, causal);
  for (Index o = 0; o < 3; ++o)
    for (Index t = 0; t < 3; ++t)
      for (Index s = 0; s < 16; ++s) CHECK(yc[(o * 4 + t) * 16 + s] == yc2[(o * 4 + t) * 16 + s]);
}

TEST_CASE("elementwise definitions") {
  CHECK(ops::sigmoid(Tensor<D>::scalar(0.0)).item() == 0.5);
  CHECK(ops::tanh(Tensor<D>::scalar(0.0)).item() == 0.0);
  CHECK(ops::leaky_relu(Tensor<D>::scalar(-2.0), 0.2).item() == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(ops::leaky_relu(Tensor<D>::scalar(3.0), 0.2).item() == 3.0);
  CHECK_THROWS_AS(ops::add(Tensor<D>({2, 3}), Tensor<D>({3, 2})), ShapeError);
  CHECK_THROWS_AS(ops::mul(Tensor<D>({2}), Tensor<D>({2, 1})), ShapeError);
}

TEST_CASE("overflow in a forward op is an error") {
  Tensor<float> big({2}, 3e38f);
  CHECK_THROWS_AS(ops::add(big, big), NumericalError);
  CHECK_THROWS_AS(ops::scale(big, 10.0f), NumericalError);
}

TEST_CASE("layer_norm") {
  Tensor<D> c({2, 3}, 4.0);
  auto z = ops::layer_norm(c, 1, 1e-5);
  for (D v : z.data()) CHECK(v == 0.0);

  Rng rng(9);
  auto x = random_tensor<D>({3, 4, 5}, rng, -3, 5);
  auto y = ops::layer_norm(x, 2, 1e-12);
  for (Index s = 0; s < 3; ++s) {
    D m = 0, v = 0;
    for (Index i = 0; i < 20; ++i) m += y[s * 20 + i];
    m /= 20;
    for (Index i = 0; i < 20; ++i) v += (y[s * 20 + i] - m) * (y[s * 20 + i] - m);
    v /= 20;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1) < 1e-4);
  }
  // two-pass oracle
  auto y2 = ops::layer_norm(x, 2, 1e-5);
  for (Index s = 0; s < 3; ++s) {
    D m = 0;
    for (Index i = 0; i < 20; ++i) m += x[s * 20 + i];
    m /= 20;
    D v = 0;
    for (Index i = 0; i < 20; ++i) v += (x[s * 20 + i] - m) * (x[s * 20 + i] - m);
    v /= 20;
    for (Index i = 0; i < 20; ++i) CHECK(std::abs(y2[s * 20 + i] - (x[s * 20 + i] - m) / std::sqrt(v + 1e-5)) < 1e-6);
  }
}

TEST_CASE("softmax") {
  auto u = ops::softmax(Tensor<D>({1, 4}, 0.0), 1);
  for (D v : u.data()) CHECK(v == 0.25);

  const D inf = std::numeric_limits<D>::infinity();
  auto m = ops::softmax(Tensor<D>({3}, {1.0, -inf, 2.0}), 0);
  CHECK(m[1] == 0.0);
  CHECK(m[0] + m[2] == doctest::Approx(1.0));

  auto s = ops::softmax(Tensor<D>({3}, {1, 2, 3}), 0);
  CHECK(std::abs(s[0] - 0.09003057) < 1e-6);
  CHECK(std::abs(s[1] - 0.24472847) < 1e-6);
  CHECK(std::abs(s[2] - 0.66524096) < 1e-6);

  // softmax along a middle axis sums to one
  Rng rng(2);
  auto x = random_tensor<D>({2, 5, 3}, rng, -4, 4);
  auto y = ops::softmax(x, 1);
  for (Index a = 0; a < 2; ++a)
    for (Index c = 0; c < 3; ++c) {
      D tot = 0;
      for (Index k = 0; k < 5; ++k) tot += y[(a * 5 + k) * 3 + c];
      CHECK(std::abs(tot - 1) < 1e-12);
    }

  Tensor<D> mask({2, 2}, {0.0, -inf, 0.0, 0.0});
  auto ms = ops::masked_softmax(Tensor<D>({1, 2, 2}, {5, 7, 1, 1}), mask);
  CHECK(ms[0] == 1.0);
  CHECK(ms[1] == 0.0);
  CHECK(ms[2] == 0.5);
}

TEST_CASE("matmul, concat, slice, reshape, reductions") {
  Rng rng(13);
  auto a = random_tensor<D>({2, 3}, rng);
  auto b = random_tensor<D>({3, 2}, rng);
  auto c = ops::matmul(a, b);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) {
      D acc = 0;
      for (Index k = 0; k < 3; ++k) acc += a[i * 3 + k] * b[k * 2 + j];
      CHECK(std::abs(c[i * 2 + j] - acc) < 1e-9);
    }
  auto ct = ops::matmul(a, a, false, true);
  CHECK(ct.shape() == Shape{2, 2});
  CHECK_THROWS_AS(ops::matmul(a, a), ShapeError);

  auto cat = ops::concat({Tensor<D>({1, 2, 4, 4}), Tensor<D>({1, 3, 4, 4})}, 1);
  CHECK(cat.shape() == Shape{1, 5, 4, 4});
  CHECK_THROWS_AS(ops::concat({Tensor<D>({1, 2, 4, 4}), Tensor<D>({1, 3, 4, 5})}, 1), ShapeError);

  auto sl = ops::slice(Tensor<D>({2, 6}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}), 1, 2, 4);
  CHECK(sl.shape() == Shape{2, 2});
  CHECK(sl[0] == 2);
  CHECK(sl[3] == 9);

  CHECK_THROWS_AS(ops::reshape(Tensor<D>({2, 3}), {4, 2}), ShapeError);
  CHECK(ops::reshape(Tensor<D>({2, 3}), {3, 2}).shape() == Shape{3, 2});

  Tensor<D> cst({2, 3, 4}, 2.5);
  CHECK(ops::mean(cst).item() == 2.5);
  std::vector<int> ax{0, 2};
  auto rm = ops::mean(cst, std::span<const int>(ax));
  CHECK(rm.shape() == Shape{3});
  for (D v : rm.data()) CHECK(v == 2.5);

  auto p = ops::permute(Tensor<D>({2, 3}, {0, 1, 2, 3, 4, 5}), {1, 0});
  CHECK(p.shape() == Shape{3, 2});
  CHECK(p[1] == 3);
}

TEST_CASE("backward basics") {
  Rng rng(4);
  auto x = random_tensor<D>({3, 4}, rng).set_requires_grad(true);
  {
    Tape<D> tape;
    Tensor<D> loss;
    {
      TapeScope<D> s(tape);
      loss = ops::sum(x);
    }
    tape.backward(loss);
    for (D g : x.grad()) CHECK(g == 1.0);
  }
  x.zero_grad();
  {
    Tape<D> tape;
    Tensor<D> loss;
    {
      TapeScope<D> s(tape);
      loss = ops::sum(ops::mul(x, x));
    }
    tape.backward(loss);
    for (Index i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x[i]));
  }
  x.zero_grad();
  {
    // x feeds two consumers: gradients sum
    Tape<D> tape;
    Tensor<D> loss;
    {
      TapeScope<D> s(tape);
      loss = ops::sum(ops::add(ops::scale(x, 3.0), x));
    }
    tape.backward(loss);
    for (D g : x.grad()) CHECK(g == 4.0);
  }
}

TEST_CASE("backward errors") {
  auto x = Tensor<D>({2}, 1.0).set_requires_grad(true);
  Tape<D> t1, t2;
  Tensor<D> loss, vec;
  {
    TapeScope<D> s(t1);
    loss = ops::sum(x);
    vec = ops::scale(x, 2.0);
  }
  CHECK_THROWS_AS(t2.backward(loss), GradError);
  CHECK_THROWS_AS(t1.backward(vec), GradError);
  CHECK_THROWS_AS(t1.backward(Tensor<D>::scalar(1.0)), GradError);
}

TEST_CASE("finite-difference gradient checks for every op") {
  Rng rng(21);
  using Inputs = std::vector<Tensor<D>>;
  auto w = random_tensor<D>({3, 4}, rng);
  // Random linear functional keeps every output element in the loss.
  auto functional = [](const Tensor<D>& y, std::uint64_t seed) {
    Rng r(seed);
    auto wts = random_tensor<D>(y.shape(), r);
    return ops::sum(ops::mul(y, wts));
  };
  SUBCASE("add/sub/mul/scale") {
    auto f = [&](const Inputs& in) {
      return functional(ops::scale(ops::mul(ops::sub(in[0], in[1]), ops::add(in[0], in[1])), 1.7), 1);
    };
    CHECK(gradcheck(f, {random_tensor<D>({3, 4}, rng), random_tensor<D>({3, 4}, rng)}) < 1e-4);
  }
  SUBCASE("sigmoid/tanh/leaky_relu") {
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::sigmoid(in[0]), 2); },
                    {random_tensor<D>({5, 3}, rng, -3, 3)}) < 1e-4);
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::tanh(in[0]), 3); },
                    {random_tensor<D>({5, 3}, rng, -2, 2)}) < 1e-4);
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::leaky_relu(in[0], 0.2), 4); },
                    {random_tensor<D>({5, 3}, rng, -2, 2)}) < 1e-4);
  }
  SUBCASE("bias_add/scale_shift") {
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::bias_add(in[0], in[1], 1), 5); },
                    {random_tensor<D>({2, 3, 4}, rng), random_tensor<D>({3}, rng)}) < 1e-4);
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::scale_shift(in[0], in[1], in[2], 1), 6); },
                    {random_tensor<D>({2, 3, 4}, rng), random_tensor<D>({3}, rng), random_tensor<D>({3}, rng)}) <
          1e-4);
  }
  SUBCASE("conv2d/conv2d_transpose/conv3d") {
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::conv2d(in[0], in[1], in[2], 2, 1), 7); },
                    {random_tensor<D>({2, 2, 5, 5}, rng), random_tensor<D>({3, 2, 3, 3}, rng),
                     random_tensor<D>({3}, rng)}) < 1e-4);
    CHECK(gradcheck([&](const Inputs& in) {
            return functional(ops::conv2d_transpose(in[0], in[1], in[2], 2, 1), 8);
          },
                    {random_tensor<D>({2, 2, 3, 3}, rng), random_tensor<D>({2, 3, 4, 4}, rng),
                     random_tensor<D>({3}, rng)}) < 1e-4);
    ops::Conv3dOptions opt;
    opt.padding = {0, 1, 1};
    opt.causal_time = true;
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::conv3d(in[0], in[1], in[2], opt), 9); },
                    {random_tensor<D>({1, 2, 3, 3, 3}, rng), random_tensor<D>({2, 2, 2, 3, 3}, rng),
                     random_tensor<D>({2}, rng)}) < 1e-4);
  }
  SUBCASE("layer_norm/softmax/masked_softmax") {
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::layer_norm(in[0], 2, 1e-5), 10); },
                    {random_tensor<D>({3, 2, 4}, rng)}) < 1e-4);
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::softmax(in[0], 1), 11); },
                    {random_tensor<D>({3, 4, 2}, rng)}) < 1e-4);
    const D inf = std::numeric_limits<D>::infinity();
    Tensor<D> mask({3, 3}, {0, -inf, -inf, 0, 0, -inf, 0, 0, 0});
    CHECK(gradcheck([&](const Inputs& in) { return functional(ops::masked_softmax(in[0], mask), 12); },
                    {random_tensor<D>({2, 3, 3}, rng)}) < 1e-4);
  }
  SUBCASE("matmul variants") {
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb) {
        Shape sa = ta ? Shape{2, 4, 3} : Shape{2, 3, 4};
        Shape sb = tb ? Shape{2, 5, 4} : Shape{2, 4, 5};
        CHECK(gradcheck([&](const Inputs& in) { return functional(ops::matmul(in[0], in[1], ta, tb), 13); },
                        {random_tensor<D>(sa, rng), random_tensor<D>(sb, rng)}) < 1e-4);
      }
  }
  SUBCASE("concat/slice/reshape/permute/reductions/embed_grid") {
    CHECK(gradcheck([&](const Inputs& in) {
            auto c = ops::concat({in[0], in[1]}, 1);
            auto s = ops::slice(c, 1, 1, 4);
            auto r = ops::reshape(s, {3, 6});
            auto p = ops::permute(r, {1, 0});
            std::vector<int> ax{1};
            return functional(ops::mean(p, std::span<const int>(ax)), 14);
          },
                    {random_tensor<D>({2, 2, 3}, rng), random_tensor<D>({2, 3, 3}, rng)}) < 1e-4);
    std::vector<std::int32_t> idx{0, 2, 2, 1};
    CHECK(gradcheck([&](const Inputs& in) {
            return functional(ops::embed_grid(in[0], std::span<const std::int32_t>(idx), 1, 2, 2), 15);
          },
                    {random_tensor<D>({3, 4}, rng)}) < 1e-4);
  }
  SUBCASE("composite conv -> layer_norm -> softmax -> sum") {
    CHECK(gradcheck([&](const Inputs& in) {
            auto y = ops::conv2d(in[0], in[1], {}, 1, 1);
            auto n = ops::layer_norm(y, 2, 1e-5);
            auto s = ops::softmax(n, -1);
            return functional(s, 16);
          },
                    {random_tensor<D>({1, 2, 4, 4}, rng), random_tensor<D>({2, 2, 3, 3}, rng)}) < 1e-4);
  }
  (void)w;
}

TEST_CASE("adam: fixed point, closed form, determinism") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  {
    std::vector<D> p{1.0, -2.0}, g{0.0, 0.0}, m{0, 0}, v{0, 0};
    adam_update<D>(p, g, m, v, 1, cfg);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
    // nonzero moments decay geometrically under zero gradient
    std::vector<D> m2{0.5, -0.5}, v2{0.25, 0.25};
    adam_update<D>(p, g, m2, v2, 2, cfg);
    CHECK(m2[0] == doctest::Approx(0.45));
    CHECK(v2[0] == doctest::Approx(0.25 * 0.999));
  }
  {
    const D g0 = -0.3;
    std::vector<D> p{0.7}, g{g0}, m{0}, v{0};
    adam_update<D>(p, g, m, v, 1, cfg);
    // m̂ = g, v̂ = g², step = lr*g/(|g|+eps)
    const D expected = 0.7 - cfg.lr * g0 / (std::abs(g0) + cfg.eps);
    CHECK(std::abs(p[0] - expected) < 1e-15);
    CHECK(p[0] > 0.7);
  }
  {
    std::vector<D> p{1.0}, g{1.0, 2.0}, m{0}, v{0};
    CHECK_THROWS_AS(adam_update<D>(p, g, m, v, 1, cfg), ShapeError);
  }
  auto run = [&]() {
    Rng rng(99);
    auto w = random_tensor<float>({4, 4}, rng).set_requires_grad(true);
    auto target = random_tensor<float>({4, 4}, rng);
    Adam<float> opt({w}, cfg);
    for (int i = 0; i < 100; ++i) {
      Tape<float> tape;
      Tensor<float> loss;
      {
        TapeScope<float> s(tape);
        loss = ops::mse_loss(ops::tanh(w), target);
      }
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
    return w.vec();
  };
  CHECK(run() == run());
}

TEST_CASE("tape activation accounting excludes parameter-only and scalar outputs") {
  auto w = Tensor<float>({4, 4}, 0.5f).set_requires_grad(true);
  auto compute = [&](Index batch) {
    Tape<float> tape;
    TapeScope<float> s(tape);
    Tensor<float> x({batch, 4}, 1.0f);
    auto w2 = ops::scale(w, 2.0f);  // parameter-derived
    auto y = ops::tanh(ops::matmul(x, w2));
    auto loss = ops::mean(y);
    (void)loss;
    return tape.activation_bytes();
  };
  CHECK(compute(3) == 2 * 3 * 4 * sizeof(float));
  CHECK(compute(6) == 2 * compute(3));
}

TEST_CASE("matmul and conv results do not depend on buffer placement") {
  Rng rng(29);
  const std::vector<std::pair<Shape, Shape>> cases{
      {{1, 37}, {37, 19}}, {{19, 37}, {37, 1}}, {{3, 5}, {5, 4}}, {{40, 33}, {33, 50}}};
  for (const auto& [sa, sb] : cases) {
    auto a = random_tensor<float>(sa, rng);
    auto b = random_tensor<float>(sb, rng);
    const auto ref = ops::matmul(a, b).vec();
    for (int shift = 1; shift < 9; ++shift) {
      std::vector<float> pad(static_cast<std::size_t>(shift));  // perturbs where the copies land
      Tensor<float> a2(a.shape(), a.vec()), b2(b.shape(), b.vec());
      CHECK(ops::matmul(a2, b2).vec() == ref);
    }
  }
  auto x = random_tensor<float>({2, 3, 9, 9}, rng);
  auto k = random_tensor<float>({1, 3, 3, 3}, rng);
  const auto ref = ops::conv2d(x, k, Tensor<float>(), 1, 1).vec();
  for (int shift = 1; shift < 9; ++shift) {
    std::vector<float> pad(static_cast<std::size_t>(shift));
    Tensor<float> x2(x.shape(), x.vec());
    CHECK(ops::conv2d(x2, k, Tensor<float>(), 1, 1).vec() == ref);
  }
}
