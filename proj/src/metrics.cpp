#include "stpred/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace stp::metrics {

namespace {

void require_equal(std::size_t a, std::size_t b, const char* op) {
  if (a != b || a == 0)
    throw ShapeError(std::string(op) + ": frames must be non-empty and equal-sized (" + std::to_string(a) +
                     " vs " + std::to_string(b) + ")");
}

// Valid-mode separable filter of an h x w map.
std::vector<double> filter_valid(const std::vector<double>& img, Index h, Index w, const std::vector<double>& taps) {
  const Index k = static_cast<Index>(taps.size());
  const Index ho = h - k + 1, wo = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * wo));
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < wo; ++j) {
      double acc = 0;
      for (Index t = 0; t < k; ++t) acc += taps[t] * img[i * w + j + t];
      rows[i * wo + j] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(ho * wo));
  for (Index i = 0; i < ho; ++i)
    for (Index j = 0; j < wo; ++j) {
      double acc = 0;
      for (Index t = 0; t < k; ++t) acc += taps[t] * rows[(i + t) * wo + j];
      out[i * wo + j] = acc;
    }
  return out;
}

}  // namespace

double mse(std::span<const double> x, std::span<const double> y) {
  require_equal(x.size(), y.size(), "mse");
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

double psnr(std::span<const double> x, std::span<const double> y) {
  const double m = mse(x, y);
  if (m == 0) return kPsnrIdentical;
  return std::min(kPsnrIdentical, 10.0 * std::log10(1.0 / m));
}

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(window));
  const double c = (window - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < window; ++i) {
    taps[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

double ssim(std::span<const double> x, std::span<const double> y, Index height, Index width,
            const SsimOptions& opt) {
  require_equal(x.size(), y.size(), "ssim");
  if (static_cast<Index>(x.size()) != height * width) throw ShapeError("ssim: frame size does not match h*w");
  if (height < opt.window || width < opt.window)
    throw ShapeError("ssim: frame " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than the " + std::to_string(opt.window) + "x" + std::to_string(opt.window) +
                     " window");
  const auto taps = gaussian_taps(opt.window, opt.sigma);
  const std::size_t n = x.size();
  std::vector<double> xv(x.begin(), x.end()), yv(y.begin(), y.end()), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = xv[i] * xv[i];
    yy[i] = yv[i] * yv[i];
    xy[i] = xv[i] * yv[i];
  }
  const auto mx = filter_valid(xv, height, width, taps);
  const auto my = filter_valid(yv, height, width, taps);
  const auto sxx = filter_valid(xx, height, width, taps);
  const auto syy = filter_valid(yy, height, width, taps);
  const auto sxy = filter_valid(xy, height, width, taps);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2);
  const double c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kMse: return "mse";
    case Metric::kPsnr: return "psnr";
    case Metric::kSsim: return "ssim";
  }
  return "unknown";
}

std::string FrameMetricSeries::to_csv() const {
  std::ostringstream os;
  os << "step,mean,std\n" << std::setprecision(10);
  for (std::size_t i = 0; i < mean.size(); ++i) os << (i + 1) << ',' << mean[i] << ',' << std[i] << '\n';
  return os.str();
}

FrameMetricAccumulator::FrameMetricAccumulator(Metric metric, Index horizon)
    : metric_(metric), values_(static_cast<std::size_t>(horizon)) {
  if (horizon < 1) throw ShapeError("frame metrics need a horizon of at least 1");
}

template <typename T>
void FrameMetricAccumulator::add(const Tensor<T>& predicted, const Tensor<T>& target) {
  if (predicted.shape() != target.shape())
    throw ShapeError("frame_wise: predicted " + shape_str(predicted.shape()) + " vs target " +
                     shape_str(target.shape()));
  if (predicted.rank() != 5 || predicted.dim(2) != 1)
    throw ShapeError("frame_wise: expected [N, horizon, 1, H, W], got " + shape_str(predicted.shape()));
  if (predicted.dim(1) != static_cast<Index>(values_.size()))
    throw ShapeError("frame_wise: horizon " + std::to_string(predicted.dim(1)) + " differs from " +
                     std::to_string(values_.size()));
  const Index n = predicted.dim(0), m = predicted.dim(1), h = predicted.dim(3), w = predicted.dim(4);
  std::vector<double> a(static_cast<std::size_t>(h * w)), b(a.size());
  for (Index s = 0; s < n; ++s)
    for (Index k = 0; k < m; ++k) {
      const Index off = (s * m + k) * h * w;
      for (Index i = 0; i < h * w; ++i) {
        a[i] = static_cast<double>(predicted[off + i]);
        b[i] = static_cast<double>(target[off + i]);
      }
      double v = 0;
      switch (metric_) {
        case Metric::kMse: v = mse(a, b); break;
        case Metric::kPsnr: v = psnr(a, b); break;
        case Metric::kSsim: v = ssim(a, b, h, w); break;
      }
      values_[k].push_back(v);
    }
}

void FrameMetricAccumulator::add_value(Index step, double value) {
  values_.at(static_cast<std::size_t>(step)).push_back(value);
}

FrameMetricSeries FrameMetricAccumulator::series() const {
  FrameMetricSeries out;
  out.metric = metric_name(metric_);
  double total = 0;
  Index count = 0;
  for (const auto& vals : values_) {
    double m = 0;
    for (double v : vals) m += v;
    m /= static_cast<double>(std::max<std::size_t>(1, vals.size()));
    double var = 0;
    for (double v : vals) var += (v - m) * (v - m);
    var /= static_cast<double>(std::max<std::size_t>(1, vals.size()));
    out.mean.push_back(m);
    out.std.push_back(std::sqrt(var));
    for (double v : vals) total += v;
    count += static_cast<Index>(vals.size());
  }
  out.samples = values_.empty() ? 0 : static_cast<Index>(values_[0].size());
  out.aggregate = count ? total / static_cast<double>(count) : 0.0;
  return out;
}

template void FrameMetricAccumulator::add<float>(const Tensor<float>&, const Tensor<float>&);
template void FrameMetricAccumulator::add<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace stp::metrics
