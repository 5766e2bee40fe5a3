#pragma once

#include <string>
#include <vector>

#include "sad/tape.hpp"

namespace sad {

// Binary parameter file. Layout: one version byte, a u32 parameter count,
// then per parameter: u32 name length, UTF-8 name bytes, u32 rank, u64 dims,
// raw little-endian float64 data. All integers little-endian.
inline constexpr uint8_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<Parameter>& params);
std::vector<Parameter> load_checkpoint(const std::string& path);

}  // namespace sad
