#include "doctest.h"
#include "stpred/bench.hpp"
#include "stpred/ops.hpp"
#include "stpred/pipeline.hpp"
#include "stpred/vqvae.hpp"
#include "test_util.hpp"

using namespace stp;
using namespace stp::bench;

TEST_CASE("count_params: single conv, ST-LSTM formula, freeze conservation") {
  Rng rng(1);
  ParamList<float> conv{{"w", kernel_param<float>({1, 1, 3, 3}, rng)}, {"b", constant_param<float>({1}, 0.f)}};
  CHECK(count_params(conv).trainable == 10);

  for (auto [c, h, k] : {std::tuple<Index, Index, Index>{1, 4, 3}, {8, 16, 5}, {3, 7, 1}}) {
    auto cell = stlstm::CellParams<float>::init(c, h, k, rng);
    Index enumerated = 0;
    for (const auto& [name, t] : cell.named("")) enumerated += t.numel();
    CHECK(enumerated == stlstm_cell_param_formula(c, h, k));
  }

  vq::VQVAE<float> codec(vq::VQConfig{}, 3);
  auto params = codec.parameters();
  const auto before = count_params(params);
  CHECK(before.frozen == 0);
  codec.freeze();
  const auto after = count_params(codec.parameters());
  CHECK(after.trainable == 0);
  CHECK(after.frozen == before.trainable);
  CHECK(split_millions({6600000, 2170000}) == "6.60 + 2.17");
}

TEST_CASE("bench: activation term is linear in batch size and memory is analytic") {
  pipeline::PredictorSpec spec;
  spec.stlstm = {4, 8, 2, 3};
  auto model = pipeline::make_predictor<float>(spec, 4, 7);
  Rng rng(2);
  auto b1 = testing::random_tensor<float>({1, 5, 4, 4, 4}, rng);
  const std::vector<Tensor<float>> twice{b1, b1};
  auto b2 = ops::concat(std::span<const Tensor<float>>(twice), 0);
  BenchOptions opt;
  opt.warmup = 1;
  opt.iterations = 2;
  const auto r1 = bench_step_time<float>("m", *model, {}, b1, opt);
  const auto r2 = bench_step_time<float>("m", *model, {}, b2, opt);
  CHECK(r1.activation_bytes > 0);
  CHECK(r2.activation_bytes == 2 * r1.activation_bytes);
  CHECK(r1.params.trainable == param_count(model->parameters()));
  CHECK(r1.memory_bytes() == 3 * 4 * r1.params.trainable + r1.activation_bytes);
  CHECK(r1.trial_ms_per_100.size() == 5);
  opt.trials = 4;
  CHECK_THROWS(bench_step_time<float>("m", *model, {}, b1, opt));
}

TEST_CASE("bench: latent predictor steps faster than the same predictor on pixels, split counts") {
  vq::VQConfig vc;
  vq::VQVAE<float> codec(vc, 4);
  codec.freeze();
  pipeline::PredictorSpec spec;
  spec.stlstm = {vc.latent_dim, 8, 2, 3};
  auto latent = pipeline::make_predictor<float>(spec, vc.latent_dim, 5);
  pipeline::PixelBaseline<float> pixel(spec, 1, vc.latent_dim, 5);
  Rng rng(3);
  auto z = testing::random_tensor<float>({2, 6, vc.latent_dim, 16, 16}, rng);
  auto x = testing::random_tensor<float>({2, 6, 1, 64, 64}, rng, 0, 1);
  BenchOptions opt;
  opt.warmup = 2;
  opt.iterations = 3;
  const auto rl = bench_step_time<float>("latent", *latent, codec.parameters(), z, opt);
  const auto rp = bench_step_time<float>("pixel", pixel, {}, x, opt);
  CHECK(rl.mean_ms_per_100 < rp.mean_ms_per_100);
  CHECK(rl.params.trainable == param_count(latent->parameters()));
  CHECK(rl.params.frozen == param_count(codec.parameters()));
  CHECK(rp.params.frozen == 0);
  const auto csv = report_csv({rl, rp});
  CHECK(csv.find("latent," + std::to_string(rl.params.trainable) + "," + std::to_string(rl.params.frozen)) !=
        std::string::npos);
  CHECK(timing_csv({rl}).find("latent,mean,") != std::string::npos);
}

TEST_CASE("bench: repeated trials are stable") {
  pipeline::PredictorSpec spec;
  spec.stlstm = {8, 16, 2, 3};
  auto model = pipeline::make_predictor<float>(spec, 8, 9);
  Rng rng(4);
  auto z = testing::random_tensor<float>({4, 8, 8, 16, 16}, rng);
  BenchOptions opt;
  opt.iterations = 5;
  const auto r = bench_step_time<float>("stability", *model, {}, z, opt);
  MESSAGE("std/mean = " << r.std_ms_per_100 / r.mean_ms_per_100);
  CHECK(r.std_ms_per_100 / r.mean_ms_per_100 < 0.15);
}
