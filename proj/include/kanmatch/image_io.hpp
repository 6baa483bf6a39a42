// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <filesystem>

#include "kanmatch/image.hpp"

namespace kanmatch
{

/// Reads an 8- or 16-bit PNG (gray, palette and alpha variants are expanded
/// to RGB, alpha is discarded) and scales samples to [0,1] by 255 or 65535.
/// Throws IoError if the file cannot be opened and FormatError if it is not a
/// valid PNG.
ImageBuf read_png(const std::filesystem::path& path, ColorSpace cs = ColorSpace::srgb);

/// Writes a 16-bit RGB PNG with samples round(clamp01(v) * 65535). The file
/// is byte-identical for identical input.
void write_png(const std::filesystem::path& path, const ImageBuf& img);

} // namespace kanmatch
