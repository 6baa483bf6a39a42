// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <cstdint>
#include <random>

#include "kanmatch/image.hpp"
#include "kanmatch/kan.hpp"

namespace kanmatch::test
{

inline std::mt19937_64& rng(std::uint64_t seed = 0)
{
    static thread_local std::mt19937_64 gen(seed);
    return gen;
}

inline double uniform(std::mt19937_64& g, double lo = 0.0, double hi = 1.0)
{
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline Rgb random_rgb(std::mt19937_64& g)
{
    return {uniform(g), uniform(g), uniform(g)};
}

inline KanParams random_params(std::mt19937_64& g, double scale = 1.0)
{
    KanParams p;
    for (auto& x : p.u)
        x = uniform(g, -scale, scale);
    for (auto& x : p.v)
        x = uniform(g, -scale, scale);
    for (auto& x : p.c)
        x = uniform(g, -scale, scale);
    return p;
}

inline ImageBuf random_image(std::mt19937_64& g, std::size_t h, std::size_t w,
                             ColorSpace cs = ColorSpace::srgb)
{
    ImageBuf img(h, w, cs);
    for (auto& v : img.data())
        v = uniform(g);
    return img;
}

} // namespace kanmatch::test
