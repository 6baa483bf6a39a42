// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/image.hpp"

#include <cmath>
#include <string>

#include "kanmatch/error.hpp"

namespace kanmatch
{

std::string_view to_string(ColorSpace cs)
{
    switch (cs)
    {
    case ColorSpace::linear: return "linear";
    case ColorSpace::srgb: return "srgb";
    case ColorSpace::raw: return "raw";
    }
    return "unknown";
}

ColorSpace colorspace_from_string(std::string_view name)
{
    if (name == "linear")
        return ColorSpace::linear;
    if (name == "srgb")
        return ColorSpace::srgb;
    if (name == "raw")
        return ColorSpace::raw;
    throw ContractError("unknown colorspace '" + std::string(name) + "'");
}

ImageBuf::ImageBuf(std::size_t height, std::size_t width, ColorSpace cs)
    : height_(height), width_(width), colorspace_(cs), data_(height * width * 3, 0.0)
{
}

ImageBuf::ImageBuf(std::size_t height, std::size_t width, ColorSpace cs, std::vector<double> data)
    : height_(height), width_(width), colorspace_(cs), data_(std::move(data))
{
    if (data_.size() != height * width * 3)
        throw ContractError("image data size " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(height) + "x" +
                            std::to_string(width) + "x3");
}

void ImageBuf::set_pixel(std::size_t y, std::size_t x, const Rgb& rgb) noexcept
{
    double* p = &data_[(y * width_ + x) * 3];
    p[0] = clamp01(rgb[0]);
    p[1] = clamp01(rgb[1]);
    p[2] = clamp01(rgb[2]);
}

void ImageBuf::check_finite() const
{
    for (double v : data_)
        if (!std::isfinite(v))
            throw DomainError("image contains non-finite samples");
}

ImageBuf ImageBuf::filled(std::size_t height, std::size_t width, const Rgb& rgb, ColorSpace cs)
{
    ImageBuf img(height, width, cs);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            img.set_pixel(y, x, rgb);
    return img;
}

} // namespace kanmatch
