#pragma once

// Checkpoint layout (little-endian):
//   "SMPC"  u32 version
//   str     run config text
//   u32 parameter count, then per parameter: str name, u32 rank, u64 dims[rank], f64 values
//   u32 bank count, then per memory block: u64 byte length, bank payload
// Strings are a u32 length followed by the bytes.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "simmp/harness/config.hpp"
#include "simmp/simmpnet.hpp"

namespace simmp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const RunConfig& config, const SimMpNet& net);
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const SimMpNet& net);

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<SimMpNet> net;
};

// FormatError on a wrong magic or version, truncation, or any name/shape mismatch.
LoadedModel deserialize_checkpoint(std::span<const std::uint8_t> bytes);
LoadedModel load_checkpoint(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace simmp
