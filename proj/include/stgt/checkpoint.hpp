#pragma once

// Binary checkpoint: little-endian header, named segment table, then every
// value as IEEE-754 float64. Layout is documented in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stgt/numerics.hpp"

namespace stgt {

inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'G', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t step = 0;   // number of optimizer steps already taken
  std::uint32_t stage = 1;  // stage the next step belongs to
  std::string config_json;  // resolved run config, may be empty
  ParamVector values;       // model params, optionally followed by optimizer state
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws Error on bad magic, unsupported version or truncated input.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace stgt
