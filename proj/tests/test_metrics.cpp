#include <cmath>

#include "doctest.h"
#include "stpred/metrics.hpp"
#include "stpred/rng.hpp"
#include "test_util.hpp"

using namespace stp;
using namespace stp::metrics;
using stp::testing::ssim_oracle;

namespace {

std::vector<double> random_frame(Rng& rng, Index n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform();
  return v;
}

}  // namespace

TEST_CASE("mse and psnr") {
  std::vector<double> x(64, 0.3), zero(64, 0.0), one(64, 1.0);
  CHECK(mse(x, x) == 0.0);
  CHECK(psnr(x, x) == 99.0);
  CHECK(mse(zero, one) == 1.0);
  CHECK(psnr(zero, one) == 0.0);
  Rng rng(3);
  auto a = random_frame(rng, 100), b = random_frame(rng, 100);
  double direct = 0;
  for (int i = 0; i < 100; ++i) direct += (a[i] - b[i]) * (a[i] - b[i]);
  direct /= 100;
  CHECK(std::abs(mse(a, b) - direct) < 1e-9);
  CHECK(std::abs(psnr(a, b) - 10 * std::log10(1 / direct)) < 1e-9);
}

TEST_CASE("mse/psnr monotone consistency") {
  Rng rng(8);
  auto ref = random_frame(rng, 256);
  for (int t = 0; t < 20; ++t) {
    auto p = random_frame(rng, 256), q = random_frame(rng, 256);
    CHECK((mse(ref, p) < mse(ref, q)) == (psnr(ref, p) > psnr(ref, q)));
  }
}

TEST_CASE("ssim: identity, symmetry, oracle, constants") {
  Rng rng(17);
  for (int t = 0; t < 10; ++t) {
    auto x = random_frame(rng, 24 * 20), y = random_frame(rng, 24 * 20);
    CHECK(std::abs(ssim(x, x, 24, 20) - 1.0) < 1e-6);
    CHECK(std::abs(ssim(x, y, 24, 20) - ssim(y, x, 24, 20)) < 1e-9);
    CHECK(std::abs(ssim(x, y, 24, 20) - ssim_oracle(x, y, 24, 20)) < 1e-6);
    CHECK(ssim(x, y, 24, 20) <= 1.0);
  }
  std::vector<double> zeros(16 * 16, 0.0), ones(16 * 16, 1.0);
  const double c1 = 1e-4;
  CHECK(std::abs(ssim(zeros, ones, 16, 16) - c1 / (1 + c1)) < 1e-7);
  CHECK_THROWS_AS(ssim(std::vector<double>(100, 0.0), std::vector<double>(100, 0.0), 10, 10), ShapeError);
}

TEST_CASE("frame_wise series") {
  Rng rng(5);
  Tensor<double> a({3, 10, 1, 12, 12}), b({3, 10, 1, 12, 12});
  for (auto& v : a.mutable_data()) v = rng.uniform();
  for (auto& v : b.mutable_data()) v = rng.uniform();
  auto s = frame_wise(Metric::kSsim, a, a);
  CHECK(s.mean.size() == 10);
  for (double v : s.mean) CHECK(std::abs(v - 1.0) < 1e-6);

  auto m = frame_wise(Metric::kMse, a, b);
  double grand = 0;
  for (double v : m.mean) grand += v;
  grand /= 10;
  double scalar = 0;
  for (Index i = 0; i < a.numel(); ++i) scalar += (a[i] - b[i]) * (a[i] - b[i]);
  scalar /= static_cast<double>(a.numel());
  CHECK(std::abs(grand - m.aggregate) < 1e-9);
  CHECK(std::abs(m.aggregate - scalar) < 1e-9);
  auto csv = m.to_csv();
  CHECK(csv.rfind("step,mean,std\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}
