#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stpred/nn.hpp"

namespace stp::io {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct CheckpointRecord {
  std::string name;
  std::vector<std::uint32_t> extents;
  std::variant<std::vector<float>, std::vector<double>> values;

  DType dtype() const { return values.index() == 0 ? DType::kFloat32 : DType::kFloat64; }
  std::size_t element_count() const;
  /// Compares payload bytes, so NaN payloads and signed zeros round-trip as equal only to themselves.
  bool operator==(const CheckpointRecord& other) const;
};

using Checkpoint = std::vector<CheckpointRecord>;

/// "STPV", version byte 1, then records until end of file:
/// u16 name length, name, dtype byte, rank u8, u32 extents, payload (all little-endian).
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& records);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& records);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint to_checkpoint(const ParamList<T>& params);

/// Copies records into the matching tensors. Every parameter must be present with the same
/// shape and dtype, and the checkpoint may hold nothing else.
template <typename T>
void restore(const Checkpoint& records, const ParamList<T>& params);

}  // namespace stp::io
