// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>

#include "kanmatch/kan.hpp"

namespace kanmatch::detail
{

/// Input-side features of one pixel: silu and basis values per channel.
struct KanFeatures
{
    std::array<double, 3> s{};
    std::array<Basis8, 3> b{};
};

KanFeatures kan_features(const Rgb& rgb);

/// Layer output from precomputed features. When `spline` is given it receives
/// sum_m c_ijm B_m(x_i) per pair ij. Arithmetic order matches kan_eval().
Rgb kan_eval_features(const KanParams& p, const KanFeatures& f,
                      std::array<double, KanParams::kPairs>* spline = nullptr) noexcept;

} // namespace kanmatch::detail
