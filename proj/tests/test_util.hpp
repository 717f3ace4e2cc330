#pragma once

// Test-only oracles: naive loop convolutions, direct SSIM, exhaustive quantizer scan and
// central finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "stpred/rng.hpp"
#include "stpred/tensor.hpp"

namespace stp::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

/// Relative error with a 1e-3 magnitude floor so near-zero gradients compare absolutely.
inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Max relative error between tape gradients and central differences (step h) over every input element.
inline double gradcheck(const ScalarFn& f, std::vector<Tensor<double>> inputs, double h = 1e-5) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tape<double> tape;
  Tensor<double> loss;
  {
    TapeScope<double> scope(tape);
    loss = f(inputs);
  }
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& in : inputs) {
    if (in.has_grad()) analytic.emplace_back(in.grad().begin(), in.grad().end());
    else analytic.emplace_back(static_cast<std::size_t>(in.numel()), 0.0);
  }
  double worst = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + h;
      const double fp = f(inputs).item();
      data[j] = saved - h;
      const double fm = f(inputs).item();
      data[j] = saved;
      worst = std::max(worst, rel_error(analytic[i][j], (fp - fm) / (2 * h)));
    }
  }
  return worst;
}

/// Direct 7-loop convolution with zero padding.
template <typename T>
std::vector<T> naive_conv2d(const Tensor<T>& x, const Tensor<T>& k, Index stride, Index pad) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const Index ho = (h + 2 * pad - kh) / stride + 1, wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<T> out(static_cast<std::size_t>(n * o * ho * wo), T(0));
  for (Index b = 0; b < n; ++b)
    for (Index oc = 0; oc < o; ++oc)
      for (Index i = 0; i < ho; ++i)
        for (Index j = 0; j < wo; ++j) {
          T acc = 0;
          for (Index ic = 0; ic < c; ++ic)
            for (Index di = 0; di < kh; ++di)
              for (Index dj = 0; dj < kw; ++dj) {
                const Index yi = i * stride - pad + di, xj = j * stride - pad + dj;
                if (yi < 0 || yi >= h || xj < 0 || xj >= w) continue;
                acc += x[((b * c + ic) * h + yi) * w + xj] * k[((oc * c + ic) * kh + di) * kw + dj];
              }
          out[((b * o + oc) * ho + i) * wo + j] = acc;
        }
  return out;
}

/// Direct 3-D convolution; pad_t_before/after are the temporal pads.
template <typename T>
std::vector<T> naive_conv3d(const Tensor<T>& x, const Tensor<T>& k, Index pad_t_before, Index pad_t_after,
                            Index pad_hw) {
  const Index n = x.dim(0), c = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  const Index o = k.dim(0), kt = k.dim(2), kh = k.dim(3), kw = k.dim(4);
  const Index to = t + pad_t_before + pad_t_after - kt + 1;
  const Index ho = h + 2 * pad_hw - kh + 1, wo = w + 2 * pad_hw - kw + 1;
  std::vector<T> out(static_cast<std::size_t>(n * o * to * ho * wo), T(0));
  for (Index b = 0; b < n; ++b)
    for (Index oc = 0; oc < o; ++oc)
      for (Index a = 0; a < to; ++a)
        for (Index i = 0; i < ho; ++i)
          for (Index j = 0; j < wo; ++j) {
            T acc = 0;
            for (Index ic = 0; ic < c; ++ic)
              for (Index da = 0; da < kt; ++da)
                for (Index di = 0; di < kh; ++di)
                  for (Index dj = 0; dj < kw; ++dj) {
                    const Index ta = a - pad_t_before + da, yi = i - pad_hw + di, xj = j - pad_hw + dj;
                    if (ta < 0 || ta >= t || yi < 0 || yi >= h || xj < 0 || xj >= w) continue;
                    acc += x[(((b * c + ic) * t + ta) * h + yi) * w + xj] *
                           k[(((oc * c + ic) * kt + da) * kh + di) * kw + dj];
                  }
            out[(((b * o + oc) * to + a) * ho + i) * wo + j] = acc;
          }
  return out;
}

// Direct SSIM: explicit 2-D window, two-pass moments per window position.
inline double ssim_oracle(const std::vector<double>& x, const std::vector<double>& y, Index h, Index w) {
  const int k = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  std::vector<double> win(k * k);
  double tot = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      win[i * k + j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / (2 * sigma * sigma));
      tot += win[i * k + j];
    }
  for (auto& v : win) v /= tot;
  double acc = 0;
  Index count = 0;
  for (Index r = 0; r + k <= h; ++r)
    for (Index c = 0; c + k <= w; ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          mx += win[i * k + j] * x[(r + i) * w + c + j];
          my += win[i * k + j] * y[(r + i) * w + c + j];
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double dx = x[(r + i) * w + c + j] - mx, dy = y[(r + i) * w + c + j] - my;
          vx += win[i * k + j] * dx * dx;
          vy += win[i * k + j] * dy * dy;
          cxy += win[i * k + j] * dx * dy;
        }
      acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

// Every squared distance materialized, then the first minimum.
inline std::vector<std::int32_t> scan_oracle(const Tensor<double>& z, const Tensor<double>& e) {
  const Index n = z.dim(0), d = z.dim(1), sites = z.dim(2) * z.dim(3), k = e.dim(0);
  std::vector<std::int32_t> out;
  for (Index b = 0; b < n; ++b)
    for (Index s = 0; s < sites; ++s) {
      std::vector<double> dist(static_cast<std::size_t>(k), 0.0);
      for (Index j = 0; j < k; ++j)
        for (Index c = 0; c < d; ++c) {
          const double diff = z[(b * d + c) * sites + s] - e[j * d + c];
          dist[j] += diff * diff;
        }
      out.push_back(static_cast<std::int32_t>(std::min_element(dist.begin(), dist.end()) - dist.begin()));
    }
  return out;
}

}  // namespace stp::testing
