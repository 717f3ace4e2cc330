#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "stpred/dataio.hpp"
#include "stpred/pipeline.hpp"

namespace stp::run {

/// `key = value` settings over a fixed set of namespaced keys. Every key has a default,
/// so a resolved config always lists all of them.
class RunConfig {
 public:
  RunConfig();

  /// Overrides defaults with the assignments in `text`; `#` starts a comment.
  /// Unknown or repeated keys and lines without `=` are FormatErrors naming the line.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Every key in sorted order, one `key = value` line each.
  std::string resolved() const;
  const std::map<std::string, std::string>& values() const { return values_; }
  bool operator==(const RunConfig&) const = default;

  static bool known(const std::string& key);

 private:
  std::map<std::string, std::string> values_;
};

data::MotionConfig motion_config(const RunConfig& cfg);
/// Synthetic glyphs, or the first data.idx_max_glyphs images of data.idx_path when set.
std::vector<data::Glyph> glyphs(const RunConfig& cfg);
vq::VQConfig vq_config(const RunConfig& cfg);
pipeline::CodecTrainConfig codec_train_config(const RunConfig& cfg);
pipeline::PredictorSpec predictor_spec(const RunConfig& cfg);
pipeline::PredictorTrainConfig predictor_train_config(const RunConfig& cfg);

}  // namespace stp::run
