// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "kanmatch/error.hpp"

namespace kanmatch::detail
{

inline void put_u32(std::ostream& os, std::uint32_t v)
{
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline void put_f32(std::ostream& os, float f)
{
    put_u32(os, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t get_u32(std::istream& is, const char* what)
{
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("truncated file while reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is, const char* what)
{
    return std::bit_cast<float>(get_u32(is, what));
}

} // namespace kanmatch::detail
