#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "stpred/rng.hpp"
#include "stpred/tensor.hpp"

namespace stp::data {

/// Malformed or inconsistent input file / configuration.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gray patch, one byte per pixel (value/255 on use).
struct Glyph {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Filled square, cross and diamond of side `size`.
std::vector<Glyph> synthetic_glyphs(Index size);

struct SpriteSpec {
  const Glyph* glyph = nullptr;
  double y = 0, x = 0;    // top-left corner, continuous
  double vy = 0, vx = 0;  // pixels per frame
};

/// Advances one frame. A component that would leave [0, canvas - glyph] is
/// mirrored about the wall it crossed and its velocity sign flips.
void advance_sprite(SpriteSpec& sprite, Index canvas_h, Index canvas_w);

/// Max-composites the sprite at its rounded position into `frame` (row-major h*w bytes).
void render_sprite(const SpriteSpec& sprite, Index canvas_h, Index canvas_w, std::span<std::uint8_t> frame);

/// count sequences of `frames` frames, stored as bytes [count, frames, height, width].
struct SequenceSet {
  Index count = 0;
  Index frames = 0;
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;

  std::span<const std::uint8_t> frame(Index seq, Index t) const {
    return std::span<const std::uint8_t>(pixels).subspan(
        static_cast<std::size_t>((seq * frames + t) * height * width), static_cast<std::size_t>(height * width));
  }
  bool operator==(const SequenceSet&) const = default;
};

struct MotionConfig {
  Index frames = 20;
  Index height = 64;
  Index width = 64;
  Index sprites = 2;
  double speed_min = 2.0;
  double speed_max = 4.0;
};

struct DatasetSplit {
  SequenceSet train;
  SequenceSet test;
  std::uint64_t seed = 0;
};

/// Bouncing-sprite sequences drawn from one seeded stream.
SequenceSet generate_sequences(Index count, const MotionConfig& cfg, std::span<const Glyph> glyphs,
                               std::uint64_t seed);

/// Train and test sets from disjoint derived seeds.
DatasetSplit generate_moving_sequences(Index train_count, Index test_count, const MotionConfig& cfg,
                                       std::span<const Glyph> glyphs, std::uint64_t seed);

/// Contents of an IDX file (u8 payload only).
struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> items;

  std::uint32_t count() const { return dims.empty() ? 0 : dims[0]; }
  bool operator==(const IdxFile&) const = default;
};

/// Accepts magic 0x00000803 (rank-3 images) or 0x00000801 (rank-1 labels).
IdxFile parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxFile& file);
/// Pixel bytes rescaled to [0,1].
std::vector<float> idx_to_unit(const IdxFile& file);
/// One glyph per image of a rank-3 IDX file (at most max_count).
std::vector<Glyph> glyphs_from_idx(const IdxFile& images, Index max_count);

/// "MMSQ", version 1, u32 LE count/frames/height/width, then raw bytes.
std::vector<std::uint8_t> serialize_sequences(const SequenceSet& set);
SequenceSet parse_sequences(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Creates missing parent directories.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Frames [frame_begin, frame_end) of the selected sequences as [B, S, 1, H, W] in [0,1].
template <typename T>
Tensor<T> sequence_batch(const SequenceSet& set, std::span<const Index> indices, Index frame_begin,
                         Index frame_end);

/// Individual frames of the selected (sequence, frame) pairs as [B, 1, H, W].
template <typename T>
Tensor<T> frame_batch(const SequenceSet& set, std::span<const std::pair<Index, Index>> frames);

/// Seeded per-epoch shuffling into fixed-size batches; the last batch may be partial.
class Batcher {
 public:
  Batcher(Index item_count, Index batch_size, std::uint64_t seed);

  /// Batches of item indices for `epoch` (reproducible for a given seed and epoch).
  std::vector<std::vector<Index>> epoch(std::uint64_t epoch_index) const;
  /// Next batch, advancing into a new epoch as needed.
  std::vector<Index> next();
  std::uint64_t current_epoch() const { return epoch_; }

 private:
  Index count_;
  Index batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::vector<Index>> pending_;
  std::size_t cursor_ = 0;
};

}  // namespace stp::data
