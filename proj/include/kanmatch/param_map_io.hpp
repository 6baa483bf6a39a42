// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "kanmatch/kan.hpp"

namespace kanmatch
{

/// Binary little-endian parameter-map file:
///
///   "CMKN" | u32 version | u32 height_t | u32 width_t | u32 G | u32 k |
///   u32 src_h | u32 src_w | u8 interp | height_t*width_t*90 float32
///
/// Tiles are row-major; each tile uses KanParams' flat storage order.
inline constexpr std::uint32_t kParamMapVersion = 1;

void write_param_map(std::ostream& os, const ParamMap& map);
void write_param_map(const std::filesystem::path& path, const ParamMap& map);

/// Throws FormatError on bad magic, version, grid, or truncated payload.
ParamMap read_param_map(std::istream& is);
ParamMap read_param_map(const std::filesystem::path& path);

} // namespace kanmatch
