#include "stpred/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "stpred/ops.hpp"

namespace stp::bench {

template <typename T>
ParamCounts count_params(const ParamList<T>& params) {
  ParamCounts c;
  for (const auto& [name, t] : params) (t.requires_grad() ? c.trainable : c.frozen) += t.numel();
  return c;
}

std::string split_millions(const ParamCounts& counts) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f + %.2f", counts.trainable / 1e6, counts.frozen / 1e6);
  return buf;
}

Index stlstm_cell_param_formula(Index c, Index h, Index k) {
  const Index kk = k * k;
  const Index from_x = 7 * h * c * kk;       // W_xg W_xi W_xf W_xg' W_xi' W_xf' W_xo
  const Index from_h = 4 * h * h * kk;       // W_hg W_hi W_hf W_ho
  const Index from_m = 4 * h * h * kk;       // W_mg W_mi W_mf W_mo
  const Index from_c = h * h * kk;           // W_co
  const Index merge = h * 2 * h;             // W_1x1
  const Index biases = 7 * h;
  return from_x + from_h + from_m + from_c + merge + biases;
}

std::size_t BenchReport::param_bytes() const { return static_cast<std::size_t>(params.total() * element_bytes); }

std::size_t BenchReport::optimizer_bytes() const {
  return static_cast<std::size_t>(2 * params.trainable * element_bytes);
}

template <typename T>
BenchReport bench_step_time(const std::string& name, const LatentPredictor<T>& model, const ParamList<T>& frozen,
                            const Tensor<T>& batch, const BenchOptions& opt) {
  if (opt.trials < 5) throw std::invalid_argument("bench: at least 5 trials are required");
  if (opt.iterations < 1 || opt.warmup < 0) throw std::invalid_argument("bench: iterations must be positive");
  const Index steps = batch.dim(1);
  const auto target = ops::slice(batch, 1, 1, steps);
  const auto params = model.parameters();
  std::vector<Tensor<T>> trainable;
  for (const auto& [n, t] : params) trainable.push_back(t);
  Adam<T> adam(trainable, opt.adam);

  BenchReport report;
  report.model = name;
  report.params = count_params(params);
  const auto fixed = count_params(frozen);
  report.params.frozen += fixed.total();
  report.element_bytes = sizeof(T);

  auto train_step = [&] {
    Tape<T> tape;
    Tensor<T> loss;
    {
      TapeScope<T> scope(tape);
      loss = ops::mse_loss(model.forward_train(batch, {}), target);
    }
    tape.backward(loss);
    adam.step();
    adam.zero_grad();
    return tape.activation_bytes();
  };

  for (Index i = 0; i < opt.warmup; ++i) report.activation_bytes = train_step();
  using clock = std::chrono::steady_clock;
  for (Index trial = 0; trial < opt.trials; ++trial) {
    const auto t0 = clock::now();
    for (Index i = 0; i < opt.iterations; ++i) report.activation_bytes = train_step();
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    report.trial_ms_per_100.push_back(ms * 100.0 / static_cast<double>(opt.iterations));
  }
  double sum = 0;
  for (double v : report.trial_ms_per_100) sum += v;
  report.mean_ms_per_100 = sum / static_cast<double>(opt.trials);
  double ss = 0;
  for (double v : report.trial_ms_per_100) ss += (v - report.mean_ms_per_100) * (v - report.mean_ms_per_100);
  report.std_ms_per_100 = std::sqrt(ss / static_cast<double>(opt.trials - 1));
  return report;
}

std::string report_csv(const std::vector<BenchReport>& reports) {
  std::ostringstream os;
  os << "# memory_bytes = param_bytes + optimizer_bytes (two Adam moments per trainable element) + "
        "activation_bytes (tape-recorded op outputs of one train step); analytic, not measured RSS\n";
  os << "model,trainable_params,frozen_params,params_millions,param_bytes,optimizer_bytes,activation_bytes,"
        "memory_bytes\n";
  for (const auto& r : reports)
    os << r.model << ',' << r.params.trainable << ',' << r.params.frozen << ',' << split_millions(r.params) << ','
       << r.param_bytes() << ',' << r.optimizer_bytes() << ',' << r.activation_bytes << ',' << r.memory_bytes()
       << '\n';
  return os.str();
}

std::string timing_csv(const std::vector<BenchReport>& reports) {
  std::ostringstream os;
  os << "model,trial,ms_per_100_iterations\n";
  char buf[64];
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.trial_ms_per_100.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.6g", r.trial_ms_per_100[i]);
      os << r.model << ',' << i + 1 << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.6g", r.mean_ms_per_100);
    os << r.model << ",mean," << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.6g", r.std_ms_per_100);
    os << r.model << ",std," << buf << '\n';
  }
  return os.str();
}

template ParamCounts count_params<float>(const ParamList<float>&);
template ParamCounts count_params<double>(const ParamList<double>&);
template BenchReport bench_step_time<float>(const std::string&, const LatentPredictor<float>&,
                                            const ParamList<float>&, const Tensor<float>&, const BenchOptions&);
template BenchReport bench_step_time<double>(const std::string&, const LatentPredictor<double>&,
                                             const ParamList<double>&, const Tensor<double>&, const BenchOptions&);

}  // namespace stp::bench
