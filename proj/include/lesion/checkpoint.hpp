#pragma once

// Checkpoint container:
//
//   magic "LSNCKPT1" | u32 format version | u64 header length | header JSON
//   | blocks | u32 crc32 of everything before it
//
// The header holds the network spec, seed, iteration count, notes and the
// ordered list of blocks. Each block is u32 name length, name, u32 rank,
// u64 extents, then the values as little-endian IEEE-754 doubles. The loss
// log is stored as a rank-1 block named "training_log".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lesion/networks.hpp"

namespace lesion::nets {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws CorruptCheckpointError on bad magic, version, hash or layout, and
/// SpecMismatchError when `expected` is given and differs.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                  const std::optional<NetworkSpec>& expected = std::nullopt);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<NetworkSpec>& expected = std::nullopt);

/// One loss value per line.
std::string training_log_text(const Checkpoint& checkpoint);

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

}  // namespace lesion::nets
