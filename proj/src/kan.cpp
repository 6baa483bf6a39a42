// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/kan.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kanmatch/detail/kan_features.hpp"
#include "kanmatch/error.hpp"

namespace kanmatch
{

std::array<double, KanParams::kCount> KanParams::flatten() const noexcept
{
    std::array<double, kCount> flat{};
    auto it = std::copy(u.begin(), u.end(), flat.begin());
    it = std::copy(v.begin(), v.end(), it);
    std::copy(c.begin(), c.end(), it);
    return flat;
}

KanParams KanParams::from_flat(std::span<const double> flat)
{
    if (flat.size() != kCount)
        throw ContractError("KAN parameter vector must have 90 entries, got " +
                            std::to_string(flat.size()));
    KanParams p;
    std::copy_n(flat.begin(), kPairs, p.u.begin());
    std::copy_n(flat.begin() + kPairs, kPairs, p.v.begin());
    std::copy_n(flat.begin() + 2 * kPairs, kCoeffs, p.c.begin());
    return p;
}

bool KanParams::finite() const noexcept
{
    auto ok = [](double x) { return std::isfinite(x); };
    return std::all_of(u.begin(), u.end(), ok) && std::all_of(v.begin(), v.end(), ok) &&
           std::all_of(c.begin(), c.end(), ok);
}

KanParams identity_params()
{
    const auto g = greville_abscissae(default_grid());
    KanParams p;
    p.v.fill(1.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t m = 0; m < kBasisCount; ++m)
            p.c[KanParams::coeff(i, i, m)] = g[m];
    return p;
}

CollapsedParams collapse(const KanParams& p) noexcept
{
    CollapsedParams cp;
    cp.a = p.u;
    for (std::size_t ij = 0; ij < KanParams::kPairs; ++ij)
        for (std::size_t m = 0; m < kBasisCount; ++m)
            cp.w[ij * kBasisCount + m] = p.v[ij] * p.c[ij * kBasisCount + m];
    return cp;
}

KanParams expand(const CollapsedParams& cp) noexcept
{
    KanParams p;
    p.u = cp.a;
    p.v.fill(1.0);
    p.c = cp.w;
    return p;
}

namespace detail
{

KanFeatures kan_features(const Rgb& rgb)
{
    KanFeatures f;
    for (std::size_t i = 0; i < 3; ++i)
    {
        const double x = clamp01(rgb[i]);
        f.s[i] = silu(x);
        f.b[i] = basis8(x);
    }
    return f;
}

Rgb kan_eval_features(const KanParams& p, const KanFeatures& f,
                      std::array<double, KanParams::kPairs>* spline_out) noexcept
{
    Rgb out{0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < 3; ++j)
    {
        double y = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
        {
            const std::size_t ij = KanParams::pair(i, j);
            double spline = 0.0;
            for (std::size_t m = 0; m < kBasisCount; ++m)
                spline += p.c[ij * kBasisCount + m] * f.b[i][m];
            if (spline_out)
                (*spline_out)[ij] = spline;
            y += p.u[ij] * f.s[i] + p.v[ij] * spline;
        }
        out[j] = y;
    }
    return out;
}

} // namespace detail

Rgb kan_eval_unchecked(const KanParams& p, const Rgb& rgb) noexcept
{
    return detail::kan_eval_features(p, detail::kan_features(rgb));
}

Rgb kan_eval(const KanParams& p, const Rgb& rgb)
{
    if (!p.finite())
        throw DomainError("KAN parameters contain non-finite values");
    for (double x : rgb)
        if (!std::isfinite(x))
            throw DomainError("KAN input color must be finite");
    return kan_eval_unchecked(p, rgb);
}

Rgb collapsed_eval(const CollapsedParams& cp, const Rgb& rgb) noexcept
{
    const detail::KanFeatures f = detail::kan_features(rgb);
    Rgb out{0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < 3; ++j)
    {
        double y = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
        {
            const std::size_t ij = KanParams::pair(i, j);
            y += cp.a[ij] * f.s[i];
            for (std::size_t m = 0; m < kBasisCount; ++m)
                y += cp.w[ij * kBasisCount + m] * f.b[i][m];
        }
        out[j] = y;
    }
    return out;
}

void ParamMap::validate() const
{
    if (height_t == 0 || width_t == 0)
        throw ContractError("parameter map must have at least one tile");
    if (params.size() != height_t * width_t)
        throw ContractError("parameter map holds " + std::to_string(params.size()) +
                            " tiles, expected " + std::to_string(height_t * width_t));
    if (source_h == 0 || source_w == 0)
        throw ContractError("parameter map source dimensions must be positive");
    for (const auto& p : params)
        if (!p.finite())
            throw DomainError("parameter map contains non-finite values");
}

ParamMap ParamMap::uniform(const KanParams& p, std::size_t source_h, std::size_t source_w,
                           std::size_t height_t, std::size_t width_t, Interp interp)
{
    ParamMap map;
    map.height_t = height_t;
    map.width_t = width_t;
    map.params.assign(height_t * width_t, p);
    map.interp = interp;
    map.source_h = source_h;
    map.source_w = source_w;
    return map;
}

std::size_t tile_of(double pos, std::size_t extent, std::size_t tiles) noexcept
{
    const double f = (pos + 0.5) * static_cast<double>(tiles) / static_cast<double>(extent);
    if (f <= 0.0)
        return 0;
    return std::min(static_cast<std::size_t>(f), tiles - 1);
}

namespace
{

// Fractional tile coordinate of a pixel position, clamped to the center
// range so edge tiles extend to the border.
void axis_blend(double pos, std::size_t extent, std::size_t tiles, std::size_t& lo,
                std::size_t& hi, double& frac) noexcept
{
    double f = (pos + 0.5) * static_cast<double>(tiles) / static_cast<double>(extent) - 0.5;
    const double top = static_cast<double>(tiles - 1);
    f = std::clamp(f, 0.0, top);
    lo = static_cast<std::size_t>(std::floor(f));
    if (lo >= tiles - 1)
    {
        lo = tiles - 1;
        hi = lo;
        frac = 0.0;
        return;
    }
    hi = lo + 1;
    frac = f - static_cast<double>(lo);
}

} // namespace

TileWeights tile_weights(const ParamMap& map, double x, double y) noexcept
{
    TileWeights tw;
    if (map.interp == Interp::nearest)
    {
        const std::size_t r = tile_of(y, map.source_h, map.height_t);
        const std::size_t c = tile_of(x, map.source_w, map.width_t);
        tw.index[0] = r * map.width_t + c;
        tw.weight[0] = 1.0;
        tw.count = 1;
        return tw;
    }

    std::size_t r0, r1, c0, c1;
    double fy, fx;
    axis_blend(y, map.source_h, map.height_t, r0, r1, fy);
    axis_blend(x, map.source_w, map.width_t, c0, c1, fx);
    const std::array<std::size_t, 4> idx{r0 * map.width_t + c0, r0 * map.width_t + c1,
                                         r1 * map.width_t + c0, r1 * map.width_t + c1};
    const std::array<double, 4> w{(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx),
                                  fy * fx};
    for (std::size_t k = 0; k < 4; ++k)
    {
        if (w[k] == 0.0)
            continue;
        tw.index[tw.count] = idx[k];
        tw.weight[tw.count] = w[k];
        ++tw.count;
    }
    return tw;
}

KanParams blend(const ParamMap& map, const TileWeights& tw) noexcept
{
    if (tw.count == 1 && tw.weight[0] == 1.0)
        return map.params[tw.index[0]];
    KanParams out;
    for (std::size_t k = 0; k < tw.count; ++k)
    {
        const KanParams& p = map.params[tw.index[k]];
        const double w = tw.weight[k];
        for (std::size_t n = 0; n < KanParams::kPairs; ++n)
        {
            out.u[n] += w * p.u[n];
            out.v[n] += w * p.v[n];
        }
        for (std::size_t n = 0; n < KanParams::kCoeffs; ++n)
            out.c[n] += w * p.c[n];
    }
    return out;
}

KanParams sample_params(const ParamMap& map, double x, double y)
{
    if (!(x >= 0.0 && x < static_cast<double>(map.source_w) && y >= 0.0 &&
          y < static_cast<double>(map.source_h)))
        throw DomainError("sample position (" + std::to_string(x) + ", " + std::to_string(y) +
                          ") outside " + std::to_string(map.source_w) + "x" +
                          std::to_string(map.source_h) + " source image");
    return blend(map, tile_weights(map, x, y));
}

ImageBuf apply(const ParamMap& map, const ImageBuf& img)
{
    map.validate();
    if (img.height() != map.source_h || img.width() != map.source_w)
        throw ContractError("image is " + std::to_string(img.height()) + "x" +
                            std::to_string(img.width()) + " but parameter map was fitted for " +
                            std::to_string(map.source_h) + "x" + std::to_string(map.source_w));
    img.check_finite();

    ImageBuf out(img.height(), img.width(), img.colorspace());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
        {
            const KanParams p = blend(map, tile_weights(map, static_cast<double>(x),
                                                        static_cast<double>(y)));
            out.set_pixel(y, x, kan_eval_unchecked(p, img.pixel(y, x)));
        }
    return out;
}

} // namespace kanmatch
