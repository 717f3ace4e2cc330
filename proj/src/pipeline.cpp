#include "stpred/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <numeric>

#include "stpred/ops.hpp"

namespace stp::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

template <typename T>
std::vector<Tensor<T>> trainable(const ParamList<T>& params) {
  std::vector<Tensor<T>> out;
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

template <typename T>
Tensor<T> gather_sequences(const Tensor<T>& all, std::span<const Index> indices, Index steps) {
  const Index per = all.numel() / all.dim(0);
  Shape shape = all.shape();
  shape[0] = static_cast<Index>(indices.size());
  shape[1] = steps;
  const Index per_step = per / all.dim(1);
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(shape[0] * steps * per_step));
  for (Index i : indices) {
    const auto begin = all.data().begin() + i * per;
    out.insert(out.end(), begin, begin + steps * per_step);
  }
  return Tensor<T>(std::move(shape), std::move(out));
}

// Shared predictor-stage loop: `loss_of` maps a batch of sequences and a sampling mask to the loss.
template <typename T, typename LossFn>
LossLog train_sequences(const std::vector<Tensor<T>>& params, const Tensor<T>& data, const PredictorTrainConfig& cfg,
                        LossFn loss_of) {
  if (data.rank() != 5) throw ShapeError("train: data must be [count,S,C,H,W], got " + shape_str(data.shape()));
  const Index steps = data.dim(1);
  if (cfg.context < 1 || cfg.context >= steps)
    throw ShapeError("train: context " + std::to_string(cfg.context) + " must lie in [1, " +
                     std::to_string(steps - 1) + "]");
  Adam<T> opt(params, cfg.adam);
  data::Batcher batcher(data.dim(0), cfg.batch, mix_seed(cfg.seed, 0x5eed));
  Rng mask_rng(mix_seed(cfg.seed, 0x3a5c));
  LossLog log;
  log.columns = {"loss"};
  for (Index it = 0; it < cfg.iterations; ++it) {
    const auto start = Clock::now();
    const auto indices = batcher.next();
    const auto batch = gather_sequences(data, indices, steps);
    const auto mask = stlstm::sampling_mask(it, cfg.schedule, steps, cfg.context, mask_rng);
    Tape<T> tape;
    Tensor<T> loss;
    {
      TapeScope<T> scope(tape);
      loss = loss_of(batch, mask);
    }
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    log.add(it, {static_cast<double>(loss.item())}, elapsed_ms(start));
  }
  return log;
}

}  // namespace

void LossLog::add(std::int64_t iteration, std::vector<double> values, double ms) {
  if (values.size() != columns.size()) throw ShapeError("loss log: value count does not match columns");
  iterations.push_back(iteration);
  rows.push_back(std::move(values));
  wall_ms.push_back(ms);
}

std::string LossLog::to_csv() const {
  std::string out = "iteration";
  for (const auto& c : columns) out += "," + c;
  out += "\n";
  char buf[64];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += std::to_string(iterations[r]);
    for (double v : rows[r]) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string LossLog::timing_csv() const {
  std::string out = "iteration,wall_ms\n";
  char buf[64];
  for (std::size_t r = 0; r < wall_ms.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%lld,%.3f\n", static_cast<long long>(iterations[r]), wall_ms[r]);
    out += buf;
  }
  return out;
}

double LossLog::mean(std::size_t col, std::size_t begin, std::size_t end) const {
  end = std::min(end, rows.size());
  if (begin >= end) throw ShapeError("loss log: empty range");
  double s = 0;
  for (std::size_t r = begin; r < end; ++r) s += rows[r][col];
  return s / static_cast<double>(end - begin);
}

template <typename T>
LossLog train_codec(vq::VQVAE<T>& codec, const data::SequenceSet& train, const CodecTrainConfig& cfg) {
  if (codec.frozen()) throw GradError("train_codec: codec is frozen");
  auto params = codec.parameters();
  Adam<T> opt(trainable(params), cfg.adam);
  data::Batcher batcher(train.count * train.frames, cfg.batch, mix_seed(cfg.seed, 0xc0dec));
  LossLog log;
  log.columns = {"loss", "reconstruction", "codebook", "commitment"};
  for (Index it = 0; it < cfg.iterations; ++it) {
    const auto start = Clock::now();
    std::vector<std::pair<Index, Index>> picks;
    for (Index i : batcher.next()) picks.emplace_back(i / train.frames, i % train.frames);
    const auto frames = data::frame_batch<T>(train, picks);
    const auto v = vq::vq_train_step(codec, opt, frames, cfg.weights);
    log.add(it, {v.total, v.reconstruction, v.codebook, v.commitment}, elapsed_ms(start));
  }
  return log;
}

template <typename T>
Tensor<T> encode_sequence(const vq::VQVAE<T>& codec, const Tensor<T>& frames) {
  if (!codec.frozen()) throw GradError("encode_sequence: codec must be frozen");
  if (frames.rank() != 5) throw ShapeError("encode_sequence: frames must be [N,S,C,H,W], got " + shape_str(frames.shape()));
  NoGradScope<T> off;
  const Index n = frames.dim(0), s = frames.dim(1);
  const auto flat = ops::reshape(frames, {n * s, frames.dim(2), frames.dim(3), frames.dim(4)});
  const auto z = codec.quantize(codec.encode(flat)).z_q;
  return ops::reshape(z, {n, s, z.dim(1), z.dim(2), z.dim(3)});
}

template <typename T>
Tensor<T> decode_sequence(const vq::VQVAE<T>& codec, const Tensor<T>& latents) {
  if (latents.rank() != 5)
    throw ShapeError("decode_sequence: latents must be [N,S,D,H,W], got " + shape_str(latents.shape()));
  NoGradScope<T> off;
  const Index n = latents.dim(0), s = latents.dim(1);
  const auto x = codec.decode(ops::reshape(latents, {n * s, latents.dim(2), latents.dim(3), latents.dim(4)}));
  return ops::reshape(x, {n, s, x.dim(1), x.dim(2), x.dim(3)});
}

template <typename T>
Tensor<T> all_frames(const data::SequenceSet& set, Index first, Index count) {
  if (count < 0) count = set.count - first;
  std::vector<Index> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), first);
  return data::sequence_batch<T>(set, idx, 0, set.frames);
}

template <typename T>
Tensor<T> encode_dataset(const vq::VQVAE<T>& codec, const data::SequenceSet& set, Index chunk) {
  std::vector<Tensor<T>> parts;
  for (Index first = 0; first < set.count; first += chunk)
    parts.push_back(encode_sequence(codec, all_frames<T>(set, first, std::min(chunk, set.count - first))));
  return ops::concat(std::span<const Tensor<T>>(parts), 0);
}

template <typename T>
Tensor<T> predict_sequence(const vq::VQVAE<T>& codec, const LatentPredictor<T>& predictor, const Tensor<T>& context,
                           Index horizon, bool requantize) {
  NoGradScope<T> off;
  const auto z = encode_sequence(codec, context);
  auto future = predictor.rollout(z, horizon);
  if (requantize) {
    const Index n = future.dim(0), m = future.dim(1);
    const auto flat = ops::reshape(future, {n * m, future.dim(2), future.dim(3), future.dim(4)});
    future = ops::reshape(codec.requantize(flat), future.shape());
  }
  return decode_sequence(codec, future);
}

template <typename T>
LossLog train_predictor(LatentPredictor<T>& predictor, const Tensor<T>& latents, const PredictorTrainConfig& cfg) {
  return train_sequences<T>(trainable(predictor.parameters()), latents, cfg,
                            [&](const Tensor<T>& batch, const std::vector<bool>& mask) {
                              const auto pred = predictor.forward_train(batch, mask);
                              return ops::mse_loss(pred, ops::slice(batch, 1, 1, batch.dim(1)));
                            });
}

PredictorKind parse_predictor_kind(const std::string& name) {
  if (name == "stlstm") return PredictorKind::kStlstm;
  if (name == "tctn") return PredictorKind::kTctn;
  throw data::FormatError("unknown predictor kind '" + name + "' (expected stlstm or tctn)");
}

template <typename T>
std::unique_ptr<LatentPredictor<T>> make_predictor(PredictorSpec spec, Index input_dim, std::uint64_t seed) {
  if (spec.kind == PredictorKind::kStlstm) {
    spec.stlstm.input_dim = input_dim;
    return std::make_unique<stlstm::STLSTMPredictor<T>>(spec.stlstm, seed);
  }
  spec.tctn.input_dim = input_dim;
  return std::make_unique<tctn::TCTNPredictor<T>>(spec.tctn, seed);
}

template <typename T>
PixelBaseline<T>::PixelBaseline(const PredictorSpec& spec, Index pixel_channels, Index embed_dim, std::uint64_t seed)
    : channels_(pixel_channels) {
  Rng rng(mix_seed(seed, 0x91e1));
  embed_w_ = kernel_param<T>({embed_dim, pixel_channels, 1, 1}, rng);
  embed_b_ = constant_param<T>({embed_dim}, T(0));
  out_w_ = kernel_param<T>({pixel_channels, embed_dim, 1, 1}, rng);
  out_b_ = constant_param<T>({pixel_channels}, T(0));
  inner_ = make_predictor<T>(spec, embed_dim, seed);
}

template <typename T>
Tensor<T> PixelBaseline<T>::embed(const Tensor<T>& frames) const {
  require_sequence(frames.shape(), channels_, "pixel baseline");
  const Index n = frames.dim(0), s = frames.dim(1), h = frames.dim(3), w = frames.dim(4);
  const auto y = ops::conv2d(ops::reshape(frames, {n * s, channels_, h, w}), embed_w_, embed_b_);
  return ops::reshape(y, {n, s, y.dim(1), h, w});
}

template <typename T>
Tensor<T> PixelBaseline<T>::project(const Tensor<T>& latents) const {
  const Index n = latents.dim(0), s = latents.dim(1), h = latents.dim(3), w = latents.dim(4);
  const auto y = ops::conv2d(ops::reshape(latents, {n * s, latents.dim(2), h, w}), out_w_, out_b_);
  return ops::reshape(y, {n, s, channels_, h, w});
}

template <typename T>
Tensor<T> PixelBaseline<T>::forward_train(const Tensor<T>& sequence, const std::vector<bool>& use_truth) const {
  return project(inner_->forward_train(embed(sequence), use_truth));
}

template <typename T>
Tensor<T> PixelBaseline<T>::rollout(const Tensor<T>& context, Index horizon) const {
  return project(inner_->rollout(embed(context), horizon));
}

template <typename T>
ParamList<T> PixelBaseline<T>::parameters() const {
  ParamList<T> p{{"pixel.embed.W", embed_w_}, {"pixel.embed.b", embed_b_}};
  auto inner = inner_->parameters();
  p.insert(p.end(), inner.begin(), inner.end());
  p.emplace_back("pixel.out.W", out_w_);
  p.emplace_back("pixel.out.b", out_b_);
  return p;
}

template <typename T>
LossLog train_pixel_baseline(PixelBaseline<T>& model, const Tensor<T>& frames, const PredictorTrainConfig& cfg) {
  return train_predictor<T>(model, frames, cfg);
}

#define STP_PIPELINE(T)                                                                                        \
  template LossLog train_codec<T>(vq::VQVAE<T>&, const data::SequenceSet&, const CodecTrainConfig&);           \
  template Tensor<T> encode_sequence<T>(const vq::VQVAE<T>&, const Tensor<T>&);                                \
  template Tensor<T> decode_sequence<T>(const vq::VQVAE<T>&, const Tensor<T>&);                                \
  template Tensor<T> encode_dataset<T>(const vq::VQVAE<T>&, const data::SequenceSet&, Index);                  \
  template Tensor<T> predict_sequence<T>(const vq::VQVAE<T>&, const LatentPredictor<T>&, const Tensor<T>&,     \
                                         Index, bool);                                                         \
  template LossLog train_predictor<T>(LatentPredictor<T>&, const Tensor<T>&, const PredictorTrainConfig&);     \
  template std::unique_ptr<LatentPredictor<T>> make_predictor<T>(PredictorSpec, Index, std::uint64_t);         \
  template class PixelBaseline<T>;                                                                             \
  template LossLog train_pixel_baseline<T>(PixelBaseline<T>&, const Tensor<T>&, const PredictorTrainConfig&);  \
  template Tensor<T> all_frames<T>(const data::SequenceSet&, Index, Index);

STP_PIPELINE(float)
STP_PIPELINE(double)

}  // namespace stp::pipeline
