#include "stpred/config.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace stp::run {

using data::FormatError;

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table{
      {"data.seed", "42"},
      {"data.train_count", "200"},
      {"data.test_count", "50"},
      {"data.frames", "20"},
      {"data.height", "64"},
      {"data.width", "64"},
      {"data.sprites", "2"},
      {"data.speed_min", "2"},
      {"data.speed_max", "4"},
      {"data.glyph_size", "12"},
      {"data.idx_path", ""},
      {"data.idx_max_glyphs", "1000"},
      {"vqvae.hidden", "32"},
      {"vqvae.latent_dim", "8"},
      {"vqvae.K", "64"},
      {"vqvae.res_blocks", "2"},
      {"vqvae.leak", "0.2"},
      {"vqvae.output_bias", "-2.5"},
      {"vqvae.beta", "0.25"},
      {"stlstm.hidden", "64"},
      {"stlstm.layers", "4"},
      {"stlstm.kernel", "5"},
      {"tctn.channels", "64"},
      {"tctn.layers", "6"},
      {"tctn.kernel", "3"},
      {"tctn.ffn_expand", "2"},
      {"tctn.leak", "0.2"},
      {"train.seed", "0"},
      {"train.threads", "1"},
      {"train.vqvae_iterations", "2000"},
      {"train.vqvae_batch", "32"},
      {"train.vqvae_lr", "0.001"},
      {"train.iterations", "1000"},
      {"train.batch", "8"},
      {"train.lr", "0.001"},
      {"train.sampling", "scheduled"},
      {"train.sampling_start", "0"},
      {"train.sampling_end", "-1"},
      {"train.sampling_p_start", "1"},
      {"train.sampling_p_end", "0"},
      {"pipeline.predictor", "stlstm"},
      {"pipeline.context", "10"},
      {"pipeline.horizon", "10"},
      {"pipeline.requantize", "true"},
      {"pipeline.eval_batch", "10"},
      {"bench.trials", "5"},
      {"bench.warmup", "10"},
      {"bench.iterations", "20"},
      {"bench.batch", "4"},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw FormatError("config: " + key + " = \"" + value + "\" is not " + kind);
}

Index positive(const RunConfig& cfg, const std::string& key) {
  const auto v = cfg.get_int(key);
  if (v < 1) throw FormatError("config: " + key + " must be at least 1, got " + std::to_string(v));
  return v;
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

bool RunConfig::known(const std::string& key) { return defaults().count(key) != 0; }

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::set<std::string> assigned;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw FormatError(where + "expected `key = value`");
    const std::string key = trim(line.substr(0, eq));
    if (!known(key)) throw FormatError(where + "unknown key \"" + key + "\"");
    if (!assigned.insert(key).second) throw FormatError(where + "key \"" + key + "\" assigned twice");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = data::read_file(path);
  try {
    return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw FormatError("config: unknown key \"" + key + "\"");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw FormatError("config: unknown key \"" + key + "\"");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const auto& s = get(key);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(key, s, "an integer");
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const auto& s = get(key);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(key, s, "an unsigned integer");
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& s = get(key);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty() || !std::isfinite(v)) bad_value(key, s, "a finite number");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, s, "true or false");
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

data::MotionConfig motion_config(const RunConfig& cfg) {
  data::MotionConfig m;
  m.frames = positive(cfg, "data.frames");
  m.height = positive(cfg, "data.height");
  m.width = positive(cfg, "data.width");
  m.sprites = positive(cfg, "data.sprites");
  m.speed_min = cfg.get_double("data.speed_min");
  m.speed_max = cfg.get_double("data.speed_max");
  if (m.speed_min < 0 || m.speed_max < m.speed_min)
    throw FormatError("config: need 0 <= data.speed_min <= data.speed_max");
  return m;
}

std::vector<data::Glyph> glyphs(const RunConfig& cfg) {
  const auto& path = cfg.get("data.idx_path");
  if (path.empty()) return data::synthetic_glyphs(positive(cfg, "data.glyph_size"));
  return data::glyphs_from_idx(data::parse_idx(data::read_file(path)), positive(cfg, "data.idx_max_glyphs"));
}

vq::VQConfig vq_config(const RunConfig& cfg) {
  vq::VQConfig v;
  v.hidden = positive(cfg, "vqvae.hidden");
  v.latent_dim = positive(cfg, "vqvae.latent_dim");
  v.codebook_size = positive(cfg, "vqvae.K");
  v.res_blocks = cfg.get_int("vqvae.res_blocks");
  if (v.res_blocks < 0) throw FormatError("config: vqvae.res_blocks must be nonnegative");
  v.leak = cfg.get_double("vqvae.leak");
  v.output_bias = cfg.get_double("vqvae.output_bias");
  return v;
}

pipeline::CodecTrainConfig codec_train_config(const RunConfig& cfg) {
  pipeline::CodecTrainConfig c;
  c.iterations = positive(cfg, "train.vqvae_iterations");
  c.batch = positive(cfg, "train.vqvae_batch");
  c.adam.lr = cfg.get_double("train.vqvae_lr");
  c.weights.beta = cfg.get_double("vqvae.beta");
  c.seed = cfg.get_u64("train.seed");
  return c;
}

pipeline::PredictorSpec predictor_spec(const RunConfig& cfg) {
  pipeline::PredictorSpec s;
  s.kind = pipeline::parse_predictor_kind(cfg.get("pipeline.predictor"));
  s.stlstm.hidden = positive(cfg, "stlstm.hidden");
  s.stlstm.layers = positive(cfg, "stlstm.layers");
  s.stlstm.kernel = positive(cfg, "stlstm.kernel");
  s.tctn.channels = positive(cfg, "tctn.channels");
  s.tctn.layers = positive(cfg, "tctn.layers");
  s.tctn.kernel = positive(cfg, "tctn.kernel");
  s.tctn.ffn_expand = positive(cfg, "tctn.ffn_expand");
  s.tctn.leak = cfg.get_double("tctn.leak");
  return s;
}

pipeline::PredictorTrainConfig predictor_train_config(const RunConfig& cfg) {
  pipeline::PredictorTrainConfig p;
  p.iterations = positive(cfg, "train.iterations");
  p.batch = positive(cfg, "train.batch");
  p.context = positive(cfg, "pipeline.context");
  p.adam.lr = cfg.get_double("train.lr");
  p.seed = cfg.get_u64("train.seed");
  positive(cfg, "train.threads");
  const auto& mode = cfg.get("train.sampling");
  if (mode == "teacher") p.schedule.mode = stlstm::SamplingMode::kTeacherForced;
  else if (mode == "scheduled") p.schedule.mode = stlstm::SamplingMode::kScheduled;
  else if (mode == "reverse") p.schedule.mode = stlstm::SamplingMode::kReverseScheduled;
  else throw FormatError("config: train.sampling must be teacher, scheduled or reverse, got \"" + mode + "\"");
  p.schedule.start_iter = cfg.get_int("train.sampling_start");
  const auto end = cfg.get_int("train.sampling_end");
  p.schedule.end_iter = end < 0 ? p.iterations : end;
  p.schedule.p_start = cfg.get_double("train.sampling_p_start");
  p.schedule.p_end = cfg.get_double("train.sampling_p_end");
  for (double q : {p.schedule.p_start, p.schedule.p_end})
    if (q < 0 || q > 1) throw FormatError("config: sampling probabilities must lie in [0, 1]");
  return p;
}

}  // namespace stp::run
