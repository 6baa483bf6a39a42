// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "kanmatch/image.hpp"

namespace kanmatch
{

struct Correspondence
{
    Rgb src{};
    Rgb tgt{};
    std::optional<std::array<double, 2>> pos; // (x, y) in pixels
};

/// Matched source/target colors. `weights` is either empty (uniform) or holds
/// one non-negative weight per sample.
struct CorrespondenceSet
{
    std::vector<Correspondence> samples;
    std::vector<double> weights;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    double weight(std::size_t n) const noexcept { return weights.empty() ? 1.0 : weights[n]; }

    /// Throws ContractError when empty or when values are non-finite or
    /// outside [0,1].
    void validate() const;
};

/// Aligned pixels sampled on a regular grid with the given stride.
CorrespondenceSet correspondences_from_images(const ImageBuf& src, const ImageBuf& tgt,
                                              std::size_t stride = 1);

/// CSV with header `sr,sg,sb,tr,tg,tb` optionally followed by `,x,y`.
CorrespondenceSet read_correspondences_csv(std::istream& is);
CorrespondenceSet read_correspondences_csv(const std::filesystem::path& path);
void write_correspondences_csv(std::ostream& os, const CorrespondenceSet& corr);
void write_correspondences_csv(const std::filesystem::path& path, const CorrespondenceSet& corr);

} // namespace kanmatch
