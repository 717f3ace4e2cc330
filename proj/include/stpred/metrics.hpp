#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stpred/tensor.hpp"

namespace stp::metrics {

/// Reported PSNR when the two frames are identical.
inline constexpr double kPsnrIdentical = 99.0;

double mse(std::span<const double> x, std::span<const double> y);
/// 10*log10(1/mse) for unit dynamic range; kPsnrIdentical when mse == 0.
double psnr(std::span<const double> x, std::span<const double> y);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Gaussian-windowed SSIM averaged over every window position fully inside
/// the frame (no border padding). Frames are single-channel, row-major.
double ssim(std::span<const double> x, std::span<const double> y, Index height, Index width,
            const SsimOptions& opt = {});

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(int window, double sigma);

enum class Metric { kMse, kPsnr, kSsim };
std::string metric_name(Metric m);

struct FrameMetricSeries {
  std::string metric;
  std::vector<double> mean;  // per horizon step
  std::vector<double> std;   // population std over evaluated sequences
  double aggregate = 0;      // mean over every evaluated frame
  Index samples = 0;         // sequences per step

  /// "step,mean,std" header then one row per horizon step (1-based).
  std::string to_csv() const;
};

/// Collects per-frame values step by step across evaluation batches.
class FrameMetricAccumulator {
 public:
  FrameMetricAccumulator(Metric metric, Index horizon);

  /// predicted/target: [N, horizon, 1, H, W].
  template <typename T>
  void add(const Tensor<T>& predicted, const Tensor<T>& target);
  void add_value(Index step, double value);

  FrameMetricSeries series() const;

 private:
  Metric metric_;
  std::vector<std::vector<double>> values_;
};

template <typename T>
FrameMetricSeries frame_wise(Metric metric, const Tensor<T>& predicted, const Tensor<T>& target) {
  FrameMetricAccumulator acc(metric, predicted.rank() >= 2 ? predicted.dim(1) : 0);
  acc.add(predicted, target);
  return acc.series();
}

}  // namespace stp::metrics
