#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stpred/dataio.hpp"
#include "stpred/optim.hpp"
#include "stpred/predictor.hpp"
#include "stpred/stlstm.hpp"
#include "stpred/tctn.hpp"
#include "stpred/vqvae.hpp"

namespace stp::pipeline {

/// Per-iteration training log. `rows` are deterministic; wall times are kept apart.
struct LossLog {
  std::vector<std::string> columns;  // after the leading "iteration"
  std::vector<std::int64_t> iterations;
  std::vector<std::vector<double>> rows;
  std::vector<double> wall_ms;

  void add(std::int64_t iteration, std::vector<double> values, double ms);
  std::string to_csv() const;
  std::string timing_csv() const;
  /// Mean of column `col` over rows [begin, end).
  double mean(std::size_t col, std::size_t begin, std::size_t end) const;
};

struct CodecTrainConfig {
  Index iterations = 2000;
  Index batch = 32;
  AdamConfig adam{};
  vq::VQLossWeights weights{};
  std::uint64_t seed = 0;
};

/// Stage 1: trains the codec on individual frames drawn from every sequence.
template <typename T>
LossLog train_codec(vq::VQVAE<T>& codec, const data::SequenceSet& train, const CodecTrainConfig& cfg);

/// [N, S, C, H, W] frames -> [N, S, D', H', W'] quantized latents. Requires a frozen codec; records nothing.
template <typename T>
Tensor<T> encode_sequence(const vq::VQVAE<T>& codec, const Tensor<T>& frames);

/// [N, S, D', H', W'] -> [N, S, C, 4H', 4W'].
template <typename T>
Tensor<T> decode_sequence(const vq::VQVAE<T>& codec, const Tensor<T>& latents);

/// Every sequence of `set` encoded, in chunks of `chunk` sequences.
template <typename T>
Tensor<T> encode_dataset(const vq::VQVAE<T>& codec, const data::SequenceSet& set, Index chunk = 16);

/// Encode context, roll out `horizon` latents, optionally snap them to the codebook, decode.
template <typename T>
Tensor<T> predict_sequence(const vq::VQVAE<T>& codec, const LatentPredictor<T>& predictor, const Tensor<T>& context,
                           Index horizon, bool requantize);

struct PredictorTrainConfig {
  Index iterations = 1000;
  Index batch = 8;
  Index context = 10;
  AdamConfig adam{};
  stlstm::SamplingSchedule schedule{};
  std::uint64_t seed = 0;
};

/// Stage 2 on pre-encoded latents [count, S, D', H', W']: one-step-ahead latent MSE at every position.
template <typename T>
LossLog train_predictor(LatentPredictor<T>& predictor, const Tensor<T>& latents, const PredictorTrainConfig& cfg);

enum class PredictorKind { kStlstm, kTctn };
PredictorKind parse_predictor_kind(const std::string& name);

struct PredictorSpec {
  PredictorKind kind = PredictorKind::kStlstm;
  stlstm::STLSTMConfig stlstm{};
  tctn::TCTNConfig tctn{};
};

template <typename T>
std::unique_ptr<LatentPredictor<T>> make_predictor(PredictorSpec spec, Index input_dim, std::uint64_t seed);

/// The same predictor run on pixels: a 1x1 embedding from C to D' channels before it and a
/// 1x1 projection back after it.
template <typename T>
class PixelBaseline : public LatentPredictor<T> {
 public:
  PixelBaseline(const PredictorSpec& spec, Index pixel_channels, Index embed_dim, std::uint64_t seed);

  Tensor<T> forward_train(const Tensor<T>& sequence, const std::vector<bool>& use_truth) const override;
  Tensor<T> rollout(const Tensor<T>& context, Index horizon) const override;
  ParamList<T> parameters() const override;
  std::string name() const override { return inner_->name() + "-pixel"; }

 private:
  Tensor<T> embed(const Tensor<T>& frames) const;
  Tensor<T> project(const Tensor<T>& latents) const;

  Index channels_;
  Tensor<T> embed_w_, embed_b_, out_w_, out_b_;
  std::unique_ptr<LatentPredictor<T>> inner_;
};

/// Trains a pixel-space predictor on frames [count, S, C, H, W] with pixel MSE.
template <typename T>
LossLog train_pixel_baseline(PixelBaseline<T>& model, const Tensor<T>& frames, const PredictorTrainConfig& cfg);

/// Frames [N, S, C, H, W] in [0,1] for the listed sequences.
template <typename T>
Tensor<T> all_frames(const data::SequenceSet& set, Index first = 0, Index count = -1);

}  // namespace stp::pipeline
