#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deepaco/params.hpp"
#include "json.hpp"

namespace deepaco::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (little-endian):
//   "DACOCKPT" | u32 version | u64 len | metadata JSON | u64 count |
//   count x { u64 len | name | u64 rows | u64 cols | rows*cols f64 }
struct Checkpoint {
  nlohmann::json metadata;
  ParamStore params;
};

std::vector<char> encode_checkpoint(const ParamStore& params, const nlohmann::json& metadata);
Checkpoint decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace deepaco::ad
