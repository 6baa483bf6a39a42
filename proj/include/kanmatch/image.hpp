// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace kanmatch
{

using Rgb = std::array<double, 3>;

enum class ColorSpace
{
    linear,
    srgb,
    raw
};

std::string_view to_string(ColorSpace cs);
ColorSpace colorspace_from_string(std::string_view name);

/// Interleaved H x W x 3 double-precision image.
///
/// Pixel writes through set_pixel() clamp to [0,1]; direct access through
/// data() does not, and is used by code that needs unclamped intermediates.
class ImageBuf
{
public:
    ImageBuf() = default;
    ImageBuf(std::size_t height, std::size_t width, ColorSpace cs = ColorSpace::srgb);
    ImageBuf(std::size_t height, std::size_t width, ColorSpace cs, std::vector<double> data);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept { return height_ * width_; }
    ColorSpace colorspace() const noexcept { return colorspace_; }
    void set_colorspace(ColorSpace cs) noexcept { colorspace_ = cs; }

    Rgb pixel(std::size_t y, std::size_t x) const noexcept
    {
        const double* p = &data_[(y * width_ + x) * 3];
        return {p[0], p[1], p[2]};
    }

    void set_pixel(std::size_t y, std::size_t x, const Rgb& rgb) noexcept;

    double& at(std::size_t y, std::size_t x, std::size_t c) noexcept
    {
        return data_[(y * width_ + x) * 3 + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const noexcept
    {
        return data_[(y * width_ + x) * 3 + c];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const ImageBuf& other) const noexcept
    {
        return height_ == other.height_ && width_ == other.width_;
    }

    /// Throws DomainError if any sample is non-finite.
    void check_finite() const;

    static ImageBuf filled(std::size_t height, std::size_t width, const Rgb& rgb,
                           ColorSpace cs = ColorSpace::srgb);

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    ColorSpace colorspace_ = ColorSpace::srgb;
    std::vector<double> data_;
};

inline double clamp01(double v) noexcept
{
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

} // namespace kanmatch
