// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kanmatch/image.hpp"
#include "kanmatch/spline.hpp"

namespace kanmatch
{

/// Per-location parameters of the 3 -> 3 KAN color layer:
///
///   y_j = sum_i u_ij * silu(x_i) + v_ij * sum_m c_ijm * B_m(x_i)
///
/// Flat storage order is u (i outer, j inner), then v, then c nested
/// (i, j, m). The same order is used by the parameter-map file and by the
/// generator's 90 output channels.
struct KanParams
{
    static constexpr std::size_t kPairs = 9;
    static constexpr std::size_t kCoeffs = kPairs * kBasisCount;
    static constexpr std::size_t kCount = 2 * kPairs + kCoeffs; // 90

    std::array<double, kPairs> u{};
    std::array<double, kPairs> v{};
    std::array<double, kCoeffs> c{};

    static constexpr std::size_t pair(std::size_t i, std::size_t j) noexcept { return i * 3 + j; }
    static constexpr std::size_t coeff(std::size_t i, std::size_t j, std::size_t m) noexcept
    {
        return pair(i, j) * kBasisCount + m;
    }

    std::array<double, kCount> flatten() const noexcept;
    static KanParams from_flat(std::span<const double> flat);

    bool finite() const noexcept;
};

/// u = 0, v = 1, c_iim = Greville abscissae: reproduces y = x exactly.
KanParams identity_params();

/// Gauge-fixed linear form: a = u, w_ijm = v_ij * c_ijm.
struct CollapsedParams
{
    std::array<double, KanParams::kPairs> a{};
    std::array<double, KanParams::kCoeffs> w{};
};

CollapsedParams collapse(const KanParams& p) noexcept;
KanParams expand(const CollapsedParams& cp) noexcept;

/// Unclamped layer output. Input channels are clamped to [0,1] before
/// evaluation. Throws DomainError when p has non-finite entries.
Rgb kan_eval(const KanParams& p, const Rgb& rgb);

/// kan_eval() without the parameter finiteness check.
Rgb kan_eval_unchecked(const KanParams& p, const Rgb& rgb) noexcept;

Rgb collapsed_eval(const CollapsedParams& cp, const Rgb& rgb) noexcept;

enum class Interp : std::uint8_t
{
    nearest = 0,
    bilinear = 1
};

/// Tile grid of KanParams covering an image of source_h x source_w pixels.
struct ParamMap
{
    std::size_t height_t = 1;
    std::size_t width_t = 1;
    std::vector<KanParams> params;
    Interp interp = Interp::bilinear;
    std::size_t source_h = 0;
    std::size_t source_w = 0;

    const KanParams& tile(std::size_t row, std::size_t col) const { return params[row * width_t + col]; }
    KanParams& tile(std::size_t row, std::size_t col) { return params[row * width_t + col]; }

    std::size_t tile_count() const noexcept { return height_t * width_t; }

    /// Throws ContractError on size mismatch, DomainError on non-finite entries.
    void validate() const;

    static ParamMap uniform(const KanParams& p, std::size_t source_h, std::size_t source_w,
                            std::size_t height_t = 1, std::size_t width_t = 1,
                            Interp interp = Interp::bilinear);
};

/// Index of the tile containing pixel coordinate `pos` along an axis of
/// `extent` pixels split into `tiles` tiles.
std::size_t tile_of(double pos, std::size_t extent, std::size_t tiles) noexcept;

/// Contributing tiles and their weights at a pixel position. Nearest
/// interpolation yields one tile with weight 1.
struct TileWeights
{
    std::array<std::size_t, 4> index{};
    std::array<double, 4> weight{};
    std::size_t count = 0;
};

TileWeights tile_weights(const ParamMap& map, double x, double y) noexcept;

KanParams blend(const ParamMap& map, const TileWeights& tw) noexcept;

/// Parameters at pixel (x, y); tile centers sit at (t + 0.5) * extent / tiles - 0.5.
/// Throws DomainError for coordinates outside the source image.
KanParams sample_params(const ParamMap& map, double x, double y);

/// Per-pixel KAN transform with output clamped to [0,1]. The output keeps the
/// input's colorspace tag. Throws ContractError on dimension mismatch.
ImageBuf apply(const ParamMap& map, const ImageBuf& img);

} // namespace kanmatch
