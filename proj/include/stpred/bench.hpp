#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stpred/nn.hpp"
#include "stpred/optim.hpp"
#include "stpred/predictor.hpp"
#include "stpred/stlstm.hpp"

namespace stp::bench {

struct ParamCounts {
  Index trainable = 0;
  Index frozen = 0;
  Index total() const { return trainable + frozen; }
};

/// Element counts split by requires_grad.
template <typename T>
ParamCounts count_params(const ParamList<T>& params);

/// "trainable + frozen" in millions with two decimals, e.g. "6.60 + 2.17".
std::string split_millions(const ParamCounts& counts);

/// Closed-form element count of one ST-LSTM cell with c input and h hidden channels.
Index stlstm_cell_param_formula(Index c, Index h, Index k);

struct BenchOptions {
  Index trials = 5;
  Index warmup = 10;
  Index iterations = 20;  // timed train steps per trial
  AdamConfig adam{};
};

struct BenchReport {
  std::string model;
  ParamCounts params;
  Index element_bytes = 4;
  std::size_t activation_bytes = 0;  // recorded by the tape for one train step
  std::vector<double> trial_ms_per_100;
  double mean_ms_per_100 = 0;
  double std_ms_per_100 = 0;  // sample standard deviation over trials

  /// Parameters plus two Adam moments for every trainable element; frozen tensors hold no moments.
  std::size_t param_bytes() const;
  std::size_t optimizer_bytes() const;
  std::size_t memory_bytes() const { return param_bytes() + optimizer_bytes() + activation_bytes; }
};

/// Times full train steps (teacher-forced forward, one-step-ahead MSE, backward, Adam update) of
/// `model` on `batch` [N, S, C, H, W]. `frozen` lists parameters held fixed (e.g. the codec).
template <typename T>
BenchReport bench_step_time(const std::string& name, const LatentPredictor<T>& model, const ParamList<T>& frozen,
                            const Tensor<T>& batch, const BenchOptions& opt);

/// Deterministic columns only; header explains the memory estimate.
std::string report_csv(const std::vector<BenchReport>& reports);
/// Per-trial timings plus mean and std rows.
std::string timing_csv(const std::vector<BenchReport>& reports);

}  // namespace stp::bench
