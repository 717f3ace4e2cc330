#include "stpred/stlstm.hpp"

#include <algorithm>
#include <cmath>

#include "stpred/ops.hpp"

namespace stp::stlstm {

template <typename T>
CellParams<T> CellParams<T>::init(Index in, Index hidden, Index k, Rng& rng) {
  if (k % 2 == 0) throw ShapeError("stlstm: kernel size must be odd, got " + std::to_string(k));
  auto from_x = [&] { return kernel_param<T>({hidden, in, k, k}, rng); };
  auto from_h = [&] { return kernel_param<T>({hidden, hidden, k, k}, rng); };
  auto bias = [&] { return constant_param<T>({hidden}, T(0)); };
  CellParams p;
  p.w_xg = from_x(), p.w_hg = from_h(), p.w_xi = from_x(), p.w_hi = from_h(), p.w_xf = from_x(), p.w_hf = from_h();
  p.w_xg2 = from_x(), p.w_mg = from_h(), p.w_xi2 = from_x(), p.w_mi = from_h(), p.w_xf2 = from_x(),
  p.w_mf = from_h();
  p.w_xo = from_x(), p.w_ho = from_h(), p.w_co = from_h(), p.w_mo = from_h();
  p.w_merge = kernel_param<T>({hidden, 2 * hidden, 1, 1}, rng);
  p.b_g = bias(), p.b_i = bias(), p.b_f = bias(), p.b_g2 = bias(), p.b_i2 = bias(), p.b_f2 = bias(), p.b_o = bias();
  return p;
}

template <typename T>
ParamList<T> CellParams<T>::named(const std::string& prefix) const {
  return {{prefix + "W_xg", w_xg},   {prefix + "W_hg", w_hg},   {prefix + "W_xi", w_xi},   {prefix + "W_hi", w_hi},
          {prefix + "W_xf", w_xf},   {prefix + "W_hf", w_hf},   {prefix + "W_xg'", w_xg2}, {prefix + "W_mg", w_mg},
          {prefix + "W_xi'", w_xi2}, {prefix + "W_mi", w_mi},   {prefix + "W_xf'", w_xf2}, {prefix + "W_mf", w_mf},
          {prefix + "W_xo", w_xo},   {prefix + "W_ho", w_ho},   {prefix + "W_co", w_co},   {prefix + "W_mo", w_mo},
          {prefix + "W_1x1", w_merge}, {prefix + "b_g", b_g},   {prefix + "b_i", b_i},     {prefix + "b_f", b_f},
          {prefix + "b_g'", b_g2},   {prefix + "b_i'", b_i2},   {prefix + "b_f'", b_f2},   {prefix + "b_o", b_o}};
}

template <typename T>
PackedCell<T> pack(const CellParams<T>& p) {
  PackedCell<T> w;
  w.wx = ops::concat({p.w_xg, p.w_xi, p.w_xf, p.w_xg2, p.w_xi2, p.w_xf2, p.w_xo}, 0);
  w.bx = ops::concat({p.b_g, p.b_i, p.b_f, p.b_g2, p.b_i2, p.b_f2, p.b_o}, 0);
  w.wh = ops::concat({p.w_hg, p.w_hi, p.w_hf, p.w_ho}, 0);
  w.wm = ops::concat({p.w_mg, p.w_mi, p.w_mf}, 0);
  w.wmo = p.w_mo;
  w.wc = p.w_co;
  w.w_merge = p.w_merge;
  w.hidden = p.w_co.dim(0);
  w.pad = (p.w_co.dim(2) - 1) / 2;
  return w;
}

template <typename T>
CellState<T> cell_step(const PackedCell<T>& w, const Tensor<T>& x, const Tensor<T>& h_prev,
                       const Tensor<T>& c_prev, const Tensor<T>& m_in) {
  const Index hd = w.hidden;
  for (const auto* s : {&h_prev, &c_prev, &m_in})
    if (s->rank() != 4 || s->dim(1) != hd || s->dim(0) != x.dim(0) || s->dim(2) != x.dim(2) ||
        s->dim(3) != x.dim(3))
      throw ShapeError("stlstm cell: state " + shape_str(s->shape()) + " inconsistent with input " +
                       shape_str(x.shape()) + " and hidden " + std::to_string(hd));
  const auto gx = ops::conv2d(x, w.wx, w.bx, 1, w.pad);
  const auto gh = ops::conv2d(h_prev, w.wh, {}, 1, w.pad);
  const auto gm = ops::conv2d(m_in, w.wm, {}, 1, w.pad);
  auto part = [hd](const Tensor<T>& t, Index k) { return ops::slice(t, 1, k * hd, (k + 1) * hd); };

  const auto g = ops::tanh(ops::add(part(gx, 0), part(gh, 0)));
  const auto i = ops::sigmoid(ops::add(part(gx, 1), part(gh, 1)));
  const auto f = ops::sigmoid(ops::add(part(gx, 2), part(gh, 2)));
  auto c = ops::add(ops::mul(f, c_prev), ops::mul(i, g));

  const auto g2 = ops::tanh(ops::add(part(gx, 3), part(gm, 0)));
  const auto i2 = ops::sigmoid(ops::add(part(gx, 4), part(gm, 1)));
  const auto f2 = ops::sigmoid(ops::add(part(gx, 5), part(gm, 2)));
  auto m = ops::add(ops::mul(f2, m_in), ops::mul(i2, g2));

  const auto o = ops::sigmoid(ops::add(ops::add(part(gx, 6), part(gh, 3)),
                                       ops::add(ops::conv2d(c, w.wc, {}, 1, w.pad), ops::conv2d(m, w.wmo, {}, 1, w.pad))));
  auto h = ops::mul(o, ops::tanh(ops::conv2d(ops::concat({c, m}, 1), w.w_merge)));
  return {std::move(h), std::move(c), std::move(m)};
}

double SamplingSchedule::probability(std::int64_t iteration) const {
  if (p_start < 0 || p_start > 1 || p_end < 0 || p_end > 1)
    throw ShapeError("sampling schedule: probabilities must lie in [0,1]");
  if (iteration <= start_iter) return p_start;
  if (iteration >= end_iter) return p_end;
  const double a = static_cast<double>(iteration - start_iter) / static_cast<double>(end_iter - start_iter);
  return p_start + a * (p_end - p_start);
}

std::vector<bool> sampling_mask(std::int64_t iteration, const SamplingSchedule& schedule, Index steps,
                                Index context, Rng& rng) {
  if (iteration < 0) throw ShapeError("sampling_mask: negative iteration");
  if (steps < 2) throw ShapeError("sampling_mask: need at least 2 steps");
  std::vector<bool> mask(static_cast<std::size_t>(steps - 1), true);
  if (schedule.mode == SamplingMode::kTeacherForced) return mask;
  const double p = schedule.probability(iteration);
  for (Index t = 1; t < steps - 1; ++t) {
    const bool in_context = t < context;
    if (schedule.mode == SamplingMode::kScheduled) mask[t] = in_context || rng.bernoulli(p);
    else mask[t] = in_context && rng.bernoulli(p);
  }
  return mask;
}

template <typename T>
STLSTMPredictor<T>::STLSTMPredictor(const STLSTMConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.layers < 1) throw ShapeError("stlstm: need at least one layer");
  Rng rng(seed);
  for (Index l = 0; l < cfg.layers; ++l)
    cells_.push_back(CellParams<T>::init(l == 0 ? cfg.input_dim : cfg.hidden, cfg.hidden, cfg.kernel, rng));
  head_ = kernel_param<T>({cfg.input_dim, cfg.hidden, 1, 1}, rng);
}

template <typename T>
StackState<T> STLSTMPredictor<T>::zero_state(Index n, Index h, Index w) const {
  StackState<T> s;
  const Shape shape{n, cfg_.hidden, h, w};
  for (Index l = 0; l < cfg_.layers; ++l) {
    s.h.emplace_back(shape);
    s.c.emplace_back(shape);
  }
  s.m = Tensor<T>(shape);
  return s;
}

template <typename T>
std::vector<PackedCell<T>> STLSTMPredictor<T>::packed() const {
  std::vector<PackedCell<T>> out;
  for (const auto& c : cells_) out.push_back(pack(c));
  return out;
}

template <typename T>
Tensor<T> STLSTMPredictor<T>::step(const std::vector<PackedCell<T>>& packed, const Tensor<T>& x,
                                   StackState<T>& state) const {
  Tensor<T> input = x;
  for (Index l = 0; l < cfg_.layers; ++l) {
    auto next = cell_step(packed[l], input, state.h[l], state.c[l], state.m);
    state.h[l] = next.h;
    state.c[l] = next.c;
    state.m = next.m;
    input = next.h;
  }
  return ops::conv2d(input, head_);
}

template <typename T>
Tensor<T> STLSTMPredictor<T>::forward_train(const Tensor<T>& sequence, const std::vector<bool>& use_truth) const {
  require_sequence(sequence.shape(), cfg_.input_dim, "stlstm");
  const Index n = sequence.dim(0), s = sequence.dim(1), h = sequence.dim(3), w = sequence.dim(4);
  if (s < 2) throw ShapeError("stlstm: sequence needs at least 2 steps");
  if (!use_truth.empty() && static_cast<Index>(use_truth.size()) != s - 1)
    throw ShapeError("stlstm: sampling mask has " + std::to_string(use_truth.size()) + " entries, expected " +
                     std::to_string(s - 1));
  const auto frames = ops::permute(sequence, {1, 0, 2, 3, 4});  // [S, N, D, H, W]
  auto frame_at = [&](Index t) { return ops::reshape(ops::slice(frames, 0, t, t + 1), {n, cfg_.input_dim, h, w}); };
  const auto packed_cells = packed();
  auto state = zero_state(n, h, w);
  std::vector<Tensor<T>> preds;
  for (Index t = 0; t + 1 < s; ++t) {
    const bool truth = t == 0 || use_truth.empty() || use_truth[t];
    const auto x = truth ? frame_at(t) : preds.back();
    preds.push_back(step(packed_cells, x, state));
  }
  std::vector<Tensor<T>> expanded;
  for (const auto& p : preds) expanded.push_back(ops::reshape(p, {n, 1, cfg_.input_dim, h, w}));
  return ops::concat(std::span<const Tensor<T>>(expanded), 1);
}

template <typename T>
Tensor<T> STLSTMPredictor<T>::rollout(const Tensor<T>& context, Index horizon) const {
  require_sequence(context.shape(), cfg_.input_dim, "stlstm rollout");
  if (horizon < 1) throw ShapeError("stlstm rollout: horizon must be >= 1");
  const Index n = context.dim(0), c = context.dim(1), h = context.dim(3), w = context.dim(4);
  const auto frames = ops::permute(context, {1, 0, 2, 3, 4});
  const auto packed_cells = packed();
  auto state = zero_state(n, h, w);
  Tensor<T> pred;
  for (Index t = 0; t < c; ++t)
    pred = step(packed_cells, ops::reshape(ops::slice(frames, 0, t, t + 1), {n, cfg_.input_dim, h, w}), state);
  std::vector<Tensor<T>> out{ops::reshape(pred, {n, 1, cfg_.input_dim, h, w})};
  for (Index k = 1; k < horizon; ++k) {
    pred = step(packed_cells, pred, state);
    out.push_back(ops::reshape(pred, {n, 1, cfg_.input_dim, h, w}));
  }
  return ops::concat(std::span<const Tensor<T>>(out), 1);
}

template <typename T>
ParamList<T> STLSTMPredictor<T>::parameters() const {
  ParamList<T> p;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    auto named = cells_[l].named("stlstm.layer" + std::to_string(l) + ".");
    p.insert(p.end(), named.begin(), named.end());
  }
  p.emplace_back("stlstm.head.W_out", head_);
  return p;
}

#define STP_STLSTM(T)                                                                                    \
  template struct CellParams<T>;                                                                         \
  template PackedCell<T> pack<T>(const CellParams<T>&);                                                  \
  template CellState<T> cell_step<T>(const PackedCell<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                     const Tensor<T>&, const Tensor<T>&);                                \
  template class STLSTMPredictor<T>;

STP_STLSTM(float)
STP_STLSTM(double)

}  // namespace stp::stlstm
