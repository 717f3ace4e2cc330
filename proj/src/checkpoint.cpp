#include "stpred/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <set>

#include "stpred/dataio.hpp"

namespace stp::io {

using data::FormatError;

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'T', 'P', 'V'};
constexpr std::uint8_t kVersion = 1;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t le(int width, const std::string& what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const std::string& what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n)
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_) + ": " + what + " needs " +
                        std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                        " remain (expected length >= " + std::to_string(pos_ + n) + ", got " +
                        std::to_string(bytes_.size()) + ")");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put_values(std::vector<std::uint8_t>& out, const std::vector<T>& values) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : values) put_le(out, std::bit_cast<U>(v), sizeof(T));
}

template <typename T>
std::vector<T> get_values(std::span<const std::uint8_t> bytes, std::size_t count) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<T> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    U u = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) u |= static_cast<U>(bytes[i * sizeof(T) + b]) << (8 * b);
    values[i] = std::bit_cast<T>(u);
  }
  return values;
}

}  // namespace

std::size_t CheckpointRecord::element_count() const {
  std::size_t n = 1;
  for (auto e : extents) n *= e;
  return n;
}

bool CheckpointRecord::operator==(const CheckpointRecord& other) const {
  if (name != other.name || extents != other.extents || values.index() != other.values.index()) return false;
  return std::visit(
      [&](const auto& mine) {
        const auto& theirs = std::get<std::decay_t<decltype(mine)>>(other.values);
        return mine.size() == theirs.size() &&
               (mine.empty() || std::memcmp(mine.data(), theirs.data(), mine.size() * sizeof(mine[0])) == 0);
      },
      values);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& records) {
  std::set<std::string> seen;
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  for (const auto& r : records) {
    if (!seen.insert(r.name).second) throw FormatError("checkpoint: duplicate tensor name \"" + r.name + "\"");
    if (r.name.size() > 0xffff) throw FormatError("checkpoint: tensor name longer than 65535 bytes");
    if (r.extents.size() > 255) throw FormatError("checkpoint: rank above 255 for \"" + r.name + "\"");
    const std::size_t stored = std::visit([](const auto& v) { return v.size(); }, r.values);
    if (stored != r.element_count())
      throw FormatError("checkpoint: \"" + r.name + "\" holds " + std::to_string(stored) + " values for " +
                        std::to_string(r.element_count()) + " elements");
    put_le(out, r.name.size(), 2);
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.dtype()));
    out.push_back(static_cast<std::uint8_t>(r.extents.size()));
    for (auto e : r.extents) put_le(out, e, 4);
    std::visit([&](const auto& v) { put_values(out, v); }, r.values);
  }
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw FormatError("checkpoint: bad magic, expected STPV");
  const auto version = in.le(1, "version");
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint records;
  std::set<std::string> seen;
  while (!in.done()) {
    const std::size_t start = in.offset();
    const std::string label = "record " + std::to_string(records.size());
    CheckpointRecord r;
    const auto name_len = in.le(2, label + " name length");
    auto name = in.take(name_len, label + " name");
    r.name.assign(name.begin(), name.end());
    const std::string tag = label + " (\"" + r.name + "\")";
    if (!seen.insert(r.name).second)
      throw FormatError("checkpoint: duplicate tensor name \"" + r.name + "\" at byte offset " + std::to_string(start));
    const auto dtype = in.le(1, tag + " dtype");
    if (dtype > 1)
      throw FormatError("checkpoint: unknown dtype " + std::to_string(dtype) + " for " + tag + " at byte offset " +
                        std::to_string(in.offset() - 1));
    const auto rank = in.le(1, tag + " rank");
    for (std::uint64_t i = 0; i < rank; ++i) r.extents.push_back(static_cast<std::uint32_t>(in.le(4, tag + " extent")));
    const std::size_t width = dtype == 0 ? 4 : 8;
    std::size_t count = 1;
    for (auto e : r.extents) {
      // Saturate so corrupt extents surface as a truncation instead of wrapping around.
      count = e != 0 && count > bytes.size() / e ? bytes.size() + 1 : count * e;
    }
    if (count > bytes.size()) count = bytes.size() + 1;
    auto payload = in.take(count * width, tag + " payload");
    if (dtype == 0) r.values = get_values<float>(payload, count);
    else r.values = get_values<double>(payload, count);
    records.push_back(std::move(r));
  }
  return records;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& records) {
  data::write_file(path, serialize_checkpoint(records));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(data::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <typename T>
Checkpoint to_checkpoint(const ParamList<T>& params) {
  Checkpoint out;
  for (const auto& [name, t] : params) {
    CheckpointRecord r;
    r.name = name;
    for (Index e : t.shape()) r.extents.push_back(static_cast<std::uint32_t>(e));
    r.values = t.vec();
    out.push_back(std::move(r));
  }
  return out;
}

template <typename T>
void restore(const Checkpoint& records, const ParamList<T>& params) {
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (const auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor \"" + name + "\"");
    const auto& r = *it->second;
    const auto* values = std::get_if<std::vector<T>>(&r.values);
    if (values == nullptr) throw FormatError("checkpoint: dtype mismatch for \"" + name + "\"");
    Shape shape(r.extents.begin(), r.extents.end());
    if (shape != t.shape())
      throw FormatError("checkpoint: \"" + name + "\" has shape " + shape_str(shape) + ", model expects " +
                        shape_str(t.shape()));
    Tensor<T> target = t;
    std::copy(values->begin(), values->end(), target.mutable_data().begin());
    by_name.erase(it);
  }
  if (!by_name.empty()) throw FormatError("checkpoint: unexpected tensor \"" + by_name.begin()->first + "\"");
}

template Checkpoint to_checkpoint<float>(const ParamList<float>&);
template Checkpoint to_checkpoint<double>(const ParamList<double>&);
template void restore<float>(const Checkpoint&, const ParamList<float>&);
template void restore<double>(const Checkpoint&, const ParamList<double>&);

}  // namespace stp::io
