#pragma once

#include <cstdint>
#include <vector>

#include "stpred/predictor.hpp"
#include "stpred/rng.hpp"

namespace stp::stlstm {

struct STLSTMConfig {
  Index input_dim = 8;  // D'
  Index hidden = 64;
  Index layers = 4;
  Index kernel = 5;
};

/// Kernels of one cell, named as in the gate equations. Only the input-branch convolutions carry biases.
template <typename T>
struct CellParams {
  Tensor<T> w_xg, w_hg, w_xi, w_hi, w_xf, w_hf;      // temporal memory C
  Tensor<T> w_xg2, w_mg, w_xi2, w_mi, w_xf2, w_mf;   // spatiotemporal memory M
  Tensor<T> w_xo, w_ho, w_co, w_mo;                  // output gate
  Tensor<T> w_merge;                                 // 1x1 over [C, M]
  Tensor<T> b_g, b_i, b_f, b_g2, b_i2, b_f2, b_o;

  static CellParams init(Index in_channels, Index hidden, Index kernel, Rng& rng);
  ParamList<T> named(const std::string& prefix) const;
};

/// Gate kernels concatenated per source so each step runs three convolutions.
template <typename T>
struct PackedCell {
  Tensor<T> wx, bx;  // 7 gates from x: g i f g' i' f' o
  Tensor<T> wh;      // 4 gates from H: g i f o
  Tensor<T> wm;      // 3 gates from M_in: g' i' f'
  Tensor<T> wc, wmo, w_merge;  // o from C_t and M_t
  Index hidden = 0;
  Index pad = 0;
};

template <typename T>
PackedCell<T> pack(const CellParams<T>& p);

template <typename T>
struct CellState {
  Tensor<T> h, c, m;
};

/// One application of the gate equations; returns (H_t, C_t, M_t).
template <typename T>
CellState<T> cell_step(const PackedCell<T>& w, const Tensor<T>& x, const Tensor<T>& h_prev,
                       const Tensor<T>& c_prev, const Tensor<T>& m_in);

enum class SamplingMode { kTeacherForced, kScheduled, kReverseScheduled };

struct SamplingSchedule {
  SamplingMode mode = SamplingMode::kTeacherForced;
  std::int64_t start_iter = 0;
  std::int64_t end_iter = 1;
  double p_start = 1.0;
  double p_end = 1.0;

  /// Ground-truth probability at `iteration`, linear between the endpoints and clamped outside.
  double probability(std::int64_t iteration) const;
};

/// Per-input-step choice for a sequence of `steps` frames with `context` observed frames.
/// Element t (t < steps-1) is the input choice at step t; element 0 is always true.
/// Scheduled: context inputs are ground truth, horizon inputs are drawn. Reverse-scheduled:
/// context inputs are drawn, horizon inputs are always predictions.
std::vector<bool> sampling_mask(std::int64_t iteration, const SamplingSchedule& schedule, Index steps,
                                Index context, Rng& rng);

/// Per-layer H, C and the single memory M travelling in zigzag order.
template <typename T>
struct StackState {
  std::vector<Tensor<T>> h, c;
  Tensor<T> m;
};

template <typename T>
class STLSTMPredictor : public LatentPredictor<T> {
 public:
  STLSTMPredictor(const STLSTMConfig& cfg, std::uint64_t seed);

  const STLSTMConfig& config() const { return cfg_; }
  std::vector<CellParams<T>>& cells() { return cells_; }
  const std::vector<CellParams<T>>& cells() const { return cells_; }
  Tensor<T>& head() { return head_; }

  StackState<T> zero_state(Index n, Index h, Index w) const;
  /// Feeds x_t [N, D', H', W'] through all layers (M enters layer 0 from the top of t-1),
  /// updates `state` and returns the next-latent prediction.
  Tensor<T> step(const std::vector<PackedCell<T>>& packed, const Tensor<T>& x, StackState<T>& state) const;
  std::vector<PackedCell<T>> packed() const;

  Tensor<T> forward_train(const Tensor<T>& sequence, const std::vector<bool>& use_truth) const override;
  Tensor<T> rollout(const Tensor<T>& context, Index horizon) const override;
  ParamList<T> parameters() const override;
  std::string name() const override { return "stlstm"; }

 private:
  STLSTMConfig cfg_;
  std::vector<CellParams<T>> cells_;
  Tensor<T> head_;  // [D', h, 1, 1]
};

}  // namespace stp::stlstm
