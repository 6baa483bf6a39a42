// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "kanmatch/image.hpp"

namespace kanmatch
{

inline constexpr double kPsnrCap = 99.0;

/// D65 reference white.
inline constexpr Rgb kWhiteD65{0.95047, 1.0, 1.08883};

double srgb_to_linear(double v) noexcept;
double linear_to_srgb(double v) noexcept;

enum class Transfer
{
    to_linear,
    to_srgb
};

/// Applies the sRGB transfer function per sample and retags the result.
ImageBuf srgb_linear(const ImageBuf& img, Transfer direction);

Rgb linear_rgb_to_xyz(const Rgb& rgb) noexcept;
Rgb xyz_to_lab(const Rgb& xyz) noexcept;
Rgb linear_rgb_to_lab(const Rgb& rgb) noexcept;

/// CIELAB per pixel of a linear-light image, row-major.
std::vector<Rgb> linear_to_lab(const ImageBuf& img);

/// CIE76 colour difference.
double delta_e76(const Rgb& lab_a, const Rgb& lab_b) noexcept;

/// 10 log10(1 / MSE) over all samples, capped at 99 dB.
double psnr(const ImageBuf& a, const ImageBuf& b);

/// Mean SSIM of the channel-mean grayscale images over every valid 11x11
/// window (Gaussian weights, sigma 1.5, K1 0.01, K2 0.03, L 1).
double ssim(const ImageBuf& a, const ImageBuf& b);

struct DeltaE
{
    std::vector<double> map; // row-major per pixel
    double mean = 0.0;
    double p95 = 0.0;
};

/// sRGB -> linear -> XYZ (D65) -> CIELAB, CIE76 per pixel. The 95th
/// percentile interpolates linearly between order statistics.
DeltaE delta_e(const ImageBuf& a, const ImageBuf& b);

struct MetricsReport
{
    double psnr_db = 0.0;
    double ssim = 0.0;
    double delta_e_mean = 0.0;
    double delta_e_p95 = 0.0;

    std::string to_json() const;
    static MetricsReport from_json(std::string_view text);
};

MetricsReport evaluate_metrics(const ImageBuf& prediction, const ImageBuf& reference);

} // namespace kanmatch
