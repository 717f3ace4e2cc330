#include "stpred/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace stp::data {

std::vector<Glyph> synthetic_glyphs(Index size) {
  if (size < 3) throw FormatError("synthetic glyph size must be at least 3, got " + std::to_string(size));
  std::vector<Glyph> out;
  const auto make = [size](auto inside) {
    Glyph g{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size), 0)};
    for (Index i = 0; i < size; ++i)
      for (Index j = 0; j < size; ++j)
        if (inside(i, j)) g.pixels[i * size + j] = 255;
    return g;
  };
  const Index bar = std::max<Index>(1, size / 3);
  const Index lo = (size - bar) / 2, hi = lo + bar;
  const double c = (size - 1) / 2.0;
  out.push_back(make([](Index, Index) { return true; }));
  out.push_back(make([lo, hi](Index i, Index j) { return (i >= lo && i < hi) || (j >= lo && j < hi); }));
  out.push_back(make([c](Index i, Index j) { return std::abs(i - c) + std::abs(j - c) <= c + 1e-9; }));
  return out;
}

namespace {

void reflect(double& pos, double& vel, double limit) {
  if (limit <= 0) {
    pos = 0;
    return;
  }
  while (pos < 0 || pos > limit) {
    if (pos < 0) pos = -pos;
    else pos = 2 * limit - pos;
    vel = -vel;
  }
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

std::uint32_t get_u32be(std::span<const std::uint8_t> b, std::size_t off) {
  return (static_cast<std::uint32_t>(b[off]) << 24) | (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

}  // namespace

void advance_sprite(SpriteSpec& s, Index canvas_h, Index canvas_w) {
  s.y += s.vy;
  s.x += s.vx;
  reflect(s.y, s.vy, static_cast<double>(canvas_h - s.glyph->height));
  reflect(s.x, s.vx, static_cast<double>(canvas_w - s.glyph->width));
}

void render_sprite(const SpriteSpec& s, Index canvas_h, Index canvas_w, std::span<std::uint8_t> frame) {
  const Index top = static_cast<Index>(std::lround(s.y));
  const Index left = static_cast<Index>(std::lround(s.x));
  const Glyph& g = *s.glyph;
  for (Index i = 0; i < g.height; ++i) {
    const Index yy = top + i;
    if (yy < 0 || yy >= canvas_h) continue;
    for (Index j = 0; j < g.width; ++j) {
      const Index xx = left + j;
      if (xx < 0 || xx >= canvas_w) continue;
      auto& px = frame[yy * canvas_w + xx];
      px = std::max(px, g.pixels[i * g.width + j]);
    }
  }
}

SequenceSet generate_sequences(Index count, const MotionConfig& cfg, std::span<const Glyph> glyphs,
                               std::uint64_t seed) {
  if (cfg.frames < 2) throw FormatError("sequences need at least 2 frames");
  if (glyphs.empty()) throw FormatError("no glyphs to animate");
  if (cfg.speed_min < 0 || cfg.speed_max < cfg.speed_min) throw FormatError("invalid speed range");
  for (const auto& g : glyphs)
    if (g.height > cfg.height || g.width > cfg.width)
      throw FormatError("glyph " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                        " is larger than the " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                        " canvas");
  SequenceSet set{count, cfg.frames, cfg.height, cfg.width, {}};
  const Index frame_px = cfg.height * cfg.width;
  set.pixels.assign(static_cast<std::size_t>(count * cfg.frames * frame_px), 0);
  Rng rng(seed);
  std::vector<SpriteSpec> sprites(static_cast<std::size_t>(cfg.sprites));
  for (Index s = 0; s < count; ++s) {
    for (auto& sp : sprites) {
      sp.glyph = &glyphs[rng.below(glyphs.size())];
      sp.y = rng.uniform(0.0, static_cast<double>(cfg.height - sp.glyph->height));
      sp.x = rng.uniform(0.0, static_cast<double>(cfg.width - sp.glyph->width));
      const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
      const double angle = rng.uniform(0.0, 2 * std::numbers::pi);
      sp.vy = speed * std::sin(angle);
      sp.vx = speed * std::cos(angle);
    }
    for (Index t = 0; t < cfg.frames; ++t) {
      std::span<std::uint8_t> frame(set.pixels.data() + (s * cfg.frames + t) * frame_px,
                                    static_cast<std::size_t>(frame_px));
      for (const auto& sp : sprites) render_sprite(sp, cfg.height, cfg.width, frame);
      for (auto& sp : sprites) advance_sprite(sp, cfg.height, cfg.width);
    }
  }
  return set;
}

DatasetSplit generate_moving_sequences(Index train_count, Index test_count, const MotionConfig& cfg,
                                       std::span<const Glyph> glyphs, std::uint64_t seed) {
  DatasetSplit split;
  split.seed = seed;
  split.train = generate_sequences(train_count, cfg, glyphs, mix_seed(seed, 0));
  split.test = generate_sequences(test_count, cfg, glyphs, mix_seed(seed, 1));
  return split;
}

IdxFile parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("idx: file shorter than its 4-byte magic");
  const std::uint32_t magic = get_u32be(bytes, 0);
  if (magic != 0x00000803 && magic != 0x00000801) {
    std::ostringstream os;
    os << "idx: bad magic 0x" << std::hex << magic << " (expected 0x00000803 or 0x00000801)";
    throw FormatError(os.str());
  }
  const std::size_t rank = magic & 0xFF;
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header)
    throw FormatError("idx: truncated header, expected " + std::to_string(header) + " bytes, got " +
                      std::to_string(bytes.size()));
  IdxFile f;
  std::size_t payload = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    f.dims.push_back(get_u32be(bytes, 4 + 4 * i));
    payload *= f.dims.back();
  }
  if (bytes.size() != header + payload)
    throw FormatError("idx: payload size mismatch, expected " + std::to_string(header + payload) +
                      " bytes, got " + std::to_string(bytes.size()));
  f.items.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return f;
}

std::vector<std::uint8_t> serialize_idx(const IdxFile& f) {
  if (f.dims.size() != 1 && f.dims.size() != 3) throw FormatError("idx: only rank 1 and rank 3 are supported");
  std::size_t payload = 1;
  for (auto d : f.dims) payload *= d;
  if (payload != f.items.size()) throw FormatError("idx: item count does not match dims");
  std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(f.dims.size())};
  for (auto d : f.dims)
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
  out.insert(out.end(), f.items.begin(), f.items.end());
  return out;
}

std::vector<float> idx_to_unit(const IdxFile& f) {
  std::vector<float> out(f.items.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(f.items[i]) / 255.0f;
  return out;
}

std::vector<Glyph> glyphs_from_idx(const IdxFile& images, Index max_count) {
  if (images.dims.size() != 3) throw FormatError("idx: glyphs need a rank-3 image file");
  const Index n = std::min<Index>(images.dims[0], max_count);
  const Index h = images.dims[1], w = images.dims[2];
  std::vector<Glyph> out;
  for (Index i = 0; i < n; ++i) {
    Glyph g{h, w, {}};
    g.pixels.assign(images.items.begin() + i * h * w, images.items.begin() + (i + 1) * h * w);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::uint8_t> serialize_sequences(const SequenceSet& set) {
  if (static_cast<Index>(set.pixels.size()) != set.count * set.frames * set.height * set.width)
    throw FormatError("mmsq: pixel buffer does not match dimensions");
  std::vector<std::uint8_t> out{'M', 'M', 'S', 'Q', 1};
  for (Index v : {set.count, set.frames, set.height, set.width}) put_u32le(out, static_cast<std::uint32_t>(v));
  out.insert(out.end(), set.pixels.begin(), set.pixels.end());
  return out;
}

SequenceSet parse_sequences(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t header = 5 + 16;
  if (bytes.size() < header)
    throw FormatError("mmsq: truncated header, expected " + std::to_string(header) + " bytes, got " +
                      std::to_string(bytes.size()));
  if (!(bytes[0] == 'M' && bytes[1] == 'M' && bytes[2] == 'S' && bytes[3] == 'Q'))
    throw FormatError("mmsq: bad magic at offset 0");
  if (bytes[4] != 1) throw FormatError("mmsq: unsupported version " + std::to_string(bytes[4]) + " at offset 4");
  SequenceSet set;
  set.count = get_u32le(bytes, 5);
  set.frames = get_u32le(bytes, 9);
  set.height = get_u32le(bytes, 13);
  set.width = get_u32le(bytes, 17);
  const std::size_t payload = static_cast<std::size_t>(set.count * set.frames * set.height * set.width);
  if (bytes.size() != header + payload)
    throw FormatError("mmsq: payload size mismatch, expected " + std::to_string(header + payload) +
                      " bytes, got " + std::to_string(bytes.size()));
  set.pixels.assign(bytes.begin() + header, bytes.end());
  return set;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

template <typename T>
Tensor<T> sequence_batch(const SequenceSet& set, std::span<const Index> indices, Index frame_begin,
                         Index frame_end) {
  if (frame_begin < 0 || frame_end > set.frames || frame_begin >= frame_end)
    throw ShapeError("sequence_batch: frame range out of bounds");
  const Index s = frame_end - frame_begin, px = set.height * set.width;
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(static_cast<Index>(indices.size()) * s * px));
  for (Index idx : indices)
    for (Index t = frame_begin; t < frame_end; ++t)
      for (std::uint8_t v : set.frame(idx, t)) out.push_back(static_cast<T>(v) / T(255));
  return Tensor<T>(Shape{static_cast<Index>(indices.size()), s, 1, set.height, set.width}, std::move(out));
}

template <typename T>
Tensor<T> frame_batch(const SequenceSet& set, std::span<const std::pair<Index, Index>> frames) {
  std::vector<T> out;
  out.reserve(frames.size() * static_cast<std::size_t>(set.height * set.width));
  for (const auto& [seq, t] : frames)
    for (std::uint8_t v : set.frame(seq, t)) out.push_back(static_cast<T>(v) / T(255));
  return Tensor<T>(Shape{static_cast<Index>(frames.size()), 1, set.height, set.width}, std::move(out));
}

Batcher::Batcher(Index item_count, Index batch_size, std::uint64_t seed)
    : count_(item_count), batch_(batch_size), seed_(seed) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (item_count < 1) throw std::invalid_argument("batcher needs at least one item");
}

std::vector<std::vector<Index>> Batcher::epoch(std::uint64_t epoch_index) const {
  std::vector<Index> order(static_cast<std::size_t>(count_));
  for (Index i = 0; i < count_; ++i) order[i] = i;
  Rng rng(mix_seed(seed_, epoch_index));
  rng.shuffle(order);
  std::vector<std::vector<Index>> batches;
  for (Index i = 0; i < count_; i += batch_)
    batches.emplace_back(order.begin() + i, order.begin() + std::min(count_, i + batch_));
  return batches;
}

std::vector<Index> Batcher::next() {
  if (cursor_ >= pending_.size()) {
    if (!pending_.empty()) ++epoch_;
    pending_ = epoch(epoch_);
    cursor_ = 0;
  }
  return pending_[cursor_++];
}

template Tensor<float> sequence_batch<float>(const SequenceSet&, std::span<const Index>, Index, Index);
template Tensor<double> sequence_batch<double>(const SequenceSet&, std::span<const Index>, Index, Index);
template Tensor<float> frame_batch<float>(const SequenceSet&, std::span<const std::pair<Index, Index>>);
template Tensor<double> frame_batch<double>(const SequenceSet&, std::span<const std::pair<Index, Index>>);

}  // namespace stp::data
