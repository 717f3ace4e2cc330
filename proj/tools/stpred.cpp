// Command-line front end for the two-stage pipeline: data generation, codec training,
// predictor training on frozen-codec latents, prediction, evaluation and benchmarking.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "stpred/bench.hpp"
#include "stpred/checkpoint.hpp"
#include "stpred/config.hpp"
#include "stpred/metrics.hpp"
#include "stpred/ops.hpp"
#include "stpred/pipeline.hpp"

namespace fs = std::filesystem;
using namespace stp;
using run::RunConfig;

namespace {

enum Exit { kOk = 0, kUsage = 1, kDataError = 2, kNumerical = 3 };

/// A stage was run before the one whose outputs it needs.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  std::string command;
  RunConfig cfg;
  fs::path out;
  fs::path codec_path;
  fs::path predictor_path() const { return out / "checkpoints" / "predictor.stpv"; }
  fs::path data_path(const char* split) const { return out / "data" / (std::string(split) + ".mmsq"); }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw data::FormatError("cannot write " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

data::SequenceSet load_split(const Context& ctx, const char* split) {
  const auto path = ctx.data_path(split);
  if (!fs::exists(path)) throw StageError("no dataset at " + path.string() + "; run gen-data first");
  auto set = data::parse_sequences(data::read_file(path));
  const auto m = run::motion_config(ctx.cfg);
  if (set.height != m.height || set.width != m.width)
    throw data::FormatError(path.string() + " holds " + std::to_string(set.height) + "x" +
                            std::to_string(set.width) + " frames but the config asks for " +
                            std::to_string(m.height) + "x" + std::to_string(m.width));
  return set;
}

vq::VQVAE<float> load_codec(const Context& ctx) {
  if (!fs::exists(ctx.codec_path))
    throw StageError("needs a trained codec, but there is no checkpoint at " +
                     ctx.codec_path.string() + "; run train-vqvae first (or pass --checkpoint)");
  vq::VQVAE<float> codec(run::vq_config(ctx.cfg), 0);
  io::restore(io::load_checkpoint(ctx.codec_path), codec.parameters());
  codec.freeze();
  return codec;
}

std::unique_ptr<LatentPredictor<float>> new_predictor(const Context& ctx) {
  return pipeline::make_predictor<float>(run::predictor_spec(ctx.cfg), run::vq_config(ctx.cfg).latent_dim,
                                         mix_seed(ctx.cfg.get_u64("train.seed"), 2));
}

std::unique_ptr<LatentPredictor<float>> load_predictor(const Context& ctx) {
  const auto path = ctx.predictor_path();
  if (!fs::exists(path))
    throw StageError("needs a trained predictor, but there is no checkpoint at " + path.string() +
                     "; run train-predictor first");
  auto pred = new_predictor(ctx);
  io::restore(io::load_checkpoint(path), pred->parameters());
  return pred;
}

void write_log(const Context& ctx, const std::string& stem, const pipeline::LossLog& log) {
  write_text(ctx.out / (stem + "_loss.csv"), log.to_csv());
  write_text(ctx.out / (stem + "_timing.csv"), log.timing_csv());
}

int gen_data(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto glyphs = run::glyphs(cfg);
  const auto split = data::generate_moving_sequences(cfg.get_int("data.train_count"), cfg.get_int("data.test_count"),
                                                     run::motion_config(cfg), glyphs, cfg.get_u64("data.seed"));
  data::write_file(ctx.data_path("train"), data::serialize_sequences(split.train));
  data::write_file(ctx.data_path("test"), data::serialize_sequences(split.test));
  std::string csv = "split,count,frames,height,width,mean_intensity\n";
  for (const auto& [name, set] : {std::pair{"train", &split.train}, std::pair{"test", &split.test}}) {
    double sum = 0;
    for (auto p : set->pixels) sum += p / 255.0;
    csv += std::string(name) + ',' + std::to_string(set->count) + ',' + std::to_string(set->frames) + ',' +
           std::to_string(set->height) + ',' + std::to_string(set->width) + ',' +
           fmt(sum / static_cast<double>(set->pixels.size())) + '\n';
  }
  write_text(ctx.out / "data_summary.csv", csv);
  std::cout << "gen-data: " << split.train.count << " train / " << split.test.count << " test sequences of "
            << split.train.frames << " frames\n";
  return kOk;
}

int train_vqvae(const Context& ctx) {
  const auto train = load_split(ctx, "train");
  const auto test = load_split(ctx, "test");
  const auto vc = run::vq_config(ctx.cfg);
  vq::VQVAE<float> codec(vc, mix_seed(ctx.cfg.get_u64("train.seed"), 1));
  const auto tc = run::codec_train_config(ctx.cfg);
  const auto log = pipeline::train_codec(codec, train, tc);
  codec.freeze();
  io::save_checkpoint(ctx.codec_path, io::to_checkpoint(codec.parameters()));
  write_log(ctx, "vqvae", log);

  // Reconstruction quality and codebook usage on the first frame block of the test set.
  const Index n = std::min<Index>(test.count, 16);
  NoGradScope<float> no_grad;
  const auto frames = pipeline::all_frames<float>(test, 0, n);
  const auto latents = pipeline::encode_sequence(codec, frames);
  const auto recon = pipeline::decode_sequence(codec, latents);
  const auto flat = ops::reshape(frames, {n * test.frames, 1, test.height, test.width});
  const auto indices = codec.quantize(codec.encode(flat)).indices;
  const auto ssim = metrics::frame_wise(metrics::Metric::kSsim, recon, frames);
  const std::size_t per_epoch =
      static_cast<std::size_t>((train.count * train.frames + tc.batch - 1) / tc.batch);
  const std::size_t rows = log.rows.size();
  const double final_mean = log.mean(0, rows > per_epoch ? rows - per_epoch : 0, rows);
  write_text(ctx.out / "vqvae_summary.csv",
             "iterations,initial_loss,final_epoch_mean_loss,test_codebook_usage,test_reconstruction_ssim\n" +
                 std::to_string(rows) + ',' + fmt(log.rows.front()[0]) + ',' + fmt(final_mean) + ',' +
                 fmt(vq::codebook_usage(indices, vc.codebook_size)) + ',' + fmt(ssim.aggregate) + '\n');
  std::cout << "train-vqvae: loss " << log.rows.front()[0] << " -> " << final_mean << ", test reconstruction SSIM "
            << ssim.aggregate << ", checkpoint " << ctx.codec_path.string() << '\n';
  return kOk;
}

int train_predictor(const Context& ctx) {
  const auto codec = load_codec(ctx);
  const auto train = load_split(ctx, "train");
  const auto latents = pipeline::encode_dataset(codec, train, ctx.cfg.get_int("pipeline.eval_batch"));
  auto pred = new_predictor(ctx);
  const auto log = pipeline::train_predictor(*pred, latents, run::predictor_train_config(ctx.cfg));
  io::save_checkpoint(ctx.predictor_path(), io::to_checkpoint(pred->parameters()));
  write_log(ctx, "predictor", log);
  const auto counts = bench::count_params(pred->parameters());
  write_text(ctx.out / "predictor_summary.csv",
             "predictor,iterations,final_loss,trainable_params,frozen_params\n" + pred->name() + ',' +
                 std::to_string(log.rows.size()) + ',' + fmt(log.rows.back()[0]) + ',' +
                 std::to_string(counts.trainable) + ',' + std::to_string(param_count(codec.parameters())) + '\n');
  std::cout << "train-predictor: " << pred->name() << " latent loss " << log.rows.front()[0] << " -> "
            << log.rows.back()[0] << ", checkpoint " << ctx.predictor_path().string() << '\n';
  return kOk;
}

/// Runs the model over the test set in batches; `sink` receives (first sequence, prediction, target, context).
template <typename Sink>
void predict_test_set(const Context& ctx, Sink&& sink) {
  const auto codec = load_codec(ctx);
  const auto pred = load_predictor(ctx);
  const auto test = load_split(ctx, "test");
  const Index n = ctx.cfg.get_int("pipeline.context"), m = ctx.cfg.get_int("pipeline.horizon");
  const Index chunk = ctx.cfg.get_int("pipeline.eval_batch");
  if (n < 1 || m < 1 || chunk < 1) throw data::FormatError("pipeline.context, horizon and eval_batch must be >= 1");
  if (n + m > test.frames)
    throw data::FormatError("context + horizon = " + std::to_string(n + m) + " exceeds the " +
                            std::to_string(test.frames) + "-frame test sequences");
  const bool requantize = ctx.cfg.get_bool("pipeline.requantize");
  NoGradScope<float> no_grad;
  for (Index first = 0; first < test.count; first += chunk) {
    const Index count = std::min(chunk, test.count - first);
    const auto frames = pipeline::all_frames<float>(test, first, count);
    const auto context = ops::slice(frames, 1, 0, n);
    const auto target = ops::slice(frames, 1, n, n + m);
    const auto out = pipeline::predict_sequence(codec, *pred, context, m, requantize);
    sink(first, out, target, context);
  }
}

int predict(const Context& ctx) {
  const auto test = load_split(ctx, "test");
  data::SequenceSet preds;
  double sq = 0;
  std::size_t total = 0;
  predict_test_set(ctx, [&](Index, const Tensor<float>& out, const Tensor<float>& target, const Tensor<float>&) {
    preds.count += out.dim(0);
    preds.frames = out.dim(1);
    preds.height = out.dim(3);
    preds.width = out.dim(4);
    for (std::size_t i = 0; i < out.vec().size(); ++i) {
      const double v = out.vec()[i];
      preds.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
      sq += (v - target.vec()[i]) * (v - target.vec()[i]);
    }
    total += out.vec().size();
  });
  data::write_file(ctx.out / "predictions.mmsq", data::serialize_sequences(preds));
  write_text(ctx.out / "predict_summary.csv", "sequences,horizon,mean_mse\n" + std::to_string(preds.count) + ',' +
                                                  std::to_string(preds.frames) + ',' +
                                                  fmt(sq / static_cast<double>(total)) + '\n');
  std::cout << "predict: " << preds.count << " sequences x " << preds.frames << " frames -> "
            << (ctx.out / "predictions.mmsq").string() << '\n';
  return kOk;
}

int eval(const Context& ctx) {
  const Index m = ctx.cfg.get_int("pipeline.horizon");
  const std::vector<metrics::Metric> kinds{metrics::Metric::kSsim, metrics::Metric::kMse, metrics::Metric::kPsnr};
  std::vector<metrics::FrameMetricAccumulator> model, copy;
  for (auto k : kinds) {
    model.emplace_back(k, m);
    copy.emplace_back(k, m);
  }
  predict_test_set(ctx, [&](Index, const Tensor<float>& out, const Tensor<float>& target, const Tensor<float>& context) {
    const Index n = context.dim(1);
    const auto last = ops::slice(context, 1, n - 1, n);
    const std::vector<Tensor<float>> repeated(static_cast<std::size_t>(m), last);
    const auto held = ops::concat(std::span<const Tensor<float>>(repeated), 1);
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      model[i].add(out, target);
      copy[i].add(held, target);
    }
  });
  std::string summary = "method,metric,aggregate\n";
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const auto name = metrics::metric_name(kinds[i]);
    const auto ms = model[i].series(), cs = copy[i].series();
    write_text(ctx.out / ("eval_model_" + name + ".csv"), ms.to_csv());
    write_text(ctx.out / ("eval_copy_last_" + name + ".csv"), cs.to_csv());
    summary += "model," + name + ',' + fmt(ms.aggregate) + '\n';
    summary += "copy_last," + name + ',' + fmt(cs.aggregate) + '\n';
    std::cout << "eval: " << name << " model " << ms.aggregate << " copy-last " << cs.aggregate << '\n';
  }
  write_text(ctx.out / "eval_summary.csv", summary);
  return kOk;
}

int bench_cmd(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto vc = run::vq_config(cfg);
  const auto motion = run::motion_config(cfg);
  if (motion.height % vq::kDownsample || motion.width % vq::kDownsample)
    throw data::FormatError("bench: frame extents must be divisible by " + std::to_string(vq::kDownsample));
  std::optional<vq::VQVAE<float>> codec;
  if (fs::exists(ctx.codec_path)) codec.emplace(load_codec(ctx));
  else codec.emplace(vc, 0);
  codec->freeze();
  const auto spec = run::predictor_spec(cfg);
  const auto seed = cfg.get_u64("train.seed");
  auto latent = pipeline::make_predictor<float>(spec, vc.latent_dim, mix_seed(seed, 2));
  pipeline::PixelBaseline<float> pixel(spec, vc.in_channels, vc.latent_dim, mix_seed(seed, 2));
  const Index batch = cfg.get_int("bench.batch"), frames = motion.frames;
  if (batch < 1) throw data::FormatError("bench.batch must be >= 1");
  Rng rng(mix_seed(seed, 3));
  auto fill = [&](Shape s, double lo, double hi) {
    Tensor<float> t(std::move(s));
    for (auto& v : t.mutable_data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
  };
  const auto z = fill({batch, frames, vc.latent_dim, motion.height / vq::kDownsample, motion.width / vq::kDownsample},
                      -1, 1);
  const auto x = fill({batch, frames, vc.in_channels, motion.height, motion.width}, 0, 1);
  bench::BenchOptions opt;
  opt.trials = cfg.get_int("bench.trials");
  opt.warmup = cfg.get_int("bench.warmup");
  opt.iterations = cfg.get_int("bench.iterations");
  opt.adam.lr = cfg.get_double("train.lr");
  if (opt.trials < 5) throw data::FormatError("bench.trials must be >= 5");
  const auto name = latent->name();
  std::vector<bench::BenchReport> reports{
      bench::bench_step_time<float>(name + "-modular", *latent, codec->parameters(), z, opt),
      bench::bench_step_time<float>(name + "-pixel", pixel, {}, x, opt)};
  write_text(ctx.out / "bench_report.csv", bench::report_csv(reports));
  write_text(ctx.out / "bench.csv", bench::timing_csv(reports));
  for (const auto& r : reports)
    std::cout << "bench: " << r.model << " params " << bench::split_millions(r.params) << " M, "
              << r.mean_ms_per_100 << " +- " << r.std_ms_per_100 << " ms / 100 iterations, memory "
              << r.memory_bytes() << " bytes\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage spatiotemporal prediction: frozen VQ codec plus latent predictor"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir = "run", checkpoint;
  std::optional<std::uint64_t> seed;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "generate the bouncing-sprite train/test sets"},
      {"train-vqvae", "stage 1: train the codec on individual frames"},
      {"train-predictor", "stage 2: train the predictor on frozen-codec latents"},
      {"predict", "roll out the test set and write predicted frames"},
      {"eval", "frame-wise SSIM/MSE/PSNR for the model and the copy-last baseline"},
      {"bench", "parameter split, step time and memory estimate, latent vs pixel"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "run configuration (key = value lines)")->required();
    sub->add_option("--seed", seed, "overrides train.seed (data.seed for gen-data)");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--checkpoint", checkpoint, "codec checkpoint (default OUT/checkpoints/vqvae.stpv)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  try {
    ctx.cfg = RunConfig::load(config_path);
    if (seed) ctx.cfg.set(ctx.command == "gen-data" ? "data.seed" : "train.seed", std::to_string(*seed));
    ctx.out = out_dir;
    ctx.codec_path = checkpoint.empty() ? ctx.out / "checkpoints" / "vqvae.stpv" : fs::path(checkpoint);
    fs::create_directories(ctx.out);
    write_text(ctx.out / ("resolved_" + ctx.command + ".cfg"), ctx.cfg.resolved());
    if (ctx.command == "gen-data") return gen_data(ctx);
    if (ctx.command == "train-vqvae") return train_vqvae(ctx);
    if (ctx.command == "train-predictor") return train_predictor(ctx);
    if (ctx.command == "predict") return predict(ctx);
    if (ctx.command == "eval") return eval(ctx);
    return bench_cmd(ctx);
  } catch (const NumericalError& e) {
    std::cerr << ctx.command << ": numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << ctx.command << ": " << e.what() << '\n';
    return kDataError;
  }
}
