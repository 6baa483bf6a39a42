// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <json.hpp>

#include "kanmatch/error.hpp"

namespace kanmatch
{

namespace
{

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const ImageBuf& a, const ImageBuf& b, const char* what)
{
    if (!a.same_shape(b))
        throw ContractError(std::string(what) + ": images are " + std::to_string(a.height()) +
                            "x" + std::to_string(a.width()) + " and " +
                            std::to_string(b.height()) + "x" + std::to_string(b.width()));
    if (a.pixel_count() == 0)
        throw ContractError(std::string(what) + ": images are empty");
    a.check_finite();
    b.check_finite();
}

std::array<double, kWindow> gaussian_window()
{
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int k = 0; k < kWindow; ++k)
    {
        const double d = k - kWindow / 2;
        w[static_cast<std::size_t>(k)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += w[static_cast<std::size_t>(k)];
    }
    for (auto& v : w)
        v /= sum;
    return w;
}

std::vector<double> gray(const ImageBuf& img)
{
    std::vector<double> g(img.pixel_count());
    const auto d = img.data();
    for (std::size_t k = 0; k < g.size(); ++k)
        g[k] = (d[3 * k] + d[3 * k + 1] + d[3 * k + 2]) / 3.0;
    return g;
}

} // namespace

double srgb_to_linear(double v) noexcept
{
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v) noexcept
{
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

ImageBuf srgb_linear(const ImageBuf& img, Transfer direction)
{
    ImageBuf out(img.height(), img.width(),
                 direction == Transfer::to_linear ? ColorSpace::linear : ColorSpace::srgb);
    const auto in = img.data();
    auto o = out.data();
    for (std::size_t k = 0; k < in.size(); ++k)
        o[k] = direction == Transfer::to_linear ? srgb_to_linear(in[k]) : linear_to_srgb(in[k]);
    return out;
}

Rgb linear_rgb_to_xyz(const Rgb& c) noexcept
{
    return {0.4124564 * c[0] + 0.3575761 * c[1] + 0.1804375 * c[2],
            0.2126729 * c[0] + 0.7151522 * c[1] + 0.0721750 * c[2],
            0.0193339 * c[0] + 0.1191920 * c[1] + 0.9503041 * c[2]};
}

Rgb xyz_to_lab(const Rgb& xyz) noexcept
{
    constexpr double delta = 6.0 / 29.0;
    auto f = [](double t) {
        return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
    };
    const double fx = f(xyz[0] / kWhiteD65[0]);
    const double fy = f(xyz[1] / kWhiteD65[1]);
    const double fz = f(xyz[2] / kWhiteD65[2]);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Rgb linear_rgb_to_lab(const Rgb& rgb) noexcept
{
    return xyz_to_lab(linear_rgb_to_xyz(rgb));
}

std::vector<Rgb> linear_to_lab(const ImageBuf& img)
{
    std::vector<Rgb> out(img.pixel_count());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            out[y * img.width() + x] = linear_rgb_to_lab(img.pixel(y, x));
    return out;
}

double delta_e76(const Rgb& a, const Rgb& b) noexcept
{
    const double dl = a[0] - b[0];
    const double da = a[1] - b[1];
    const double db = a[2] - b[2];
    return std::sqrt(dl * dl + da * da + db * db);
}

double psnr(const ImageBuf& a, const ImageBuf& b)
{
    check_pair(a, b, "psnr");
    if (a.colorspace() != b.colorspace())
        throw ContractError("psnr: images are tagged " + std::string(to_string(a.colorspace())) +
                            " and " + std::string(to_string(b.colorspace())));
    const auto x = a.data();
    const auto y = b.data();
    double sum = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
        sum += (x[k] - y[k]) * (x[k] - y[k]);
    const double mse = sum / static_cast<double>(x.size());
    if (mse == 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const ImageBuf& a, const ImageBuf& b)
{
    check_pair(a, b, "ssim");
    if (a.height() < kWindow || a.width() < kWindow)
        throw ContractError("ssim: images must be at least 11x11, got " +
                            std::to_string(a.height()) + "x" + std::to_string(a.width()));
    const auto w = gaussian_window();
    const std::vector<double> ga = gray(a);
    const std::vector<double> gb = gray(b);
    const std::size_t width = a.width();
    const std::size_t oh = a.height() - kWindow + 1;
    const std::size_t ow = width - kWindow + 1;

    // Separable filtering of a, b, a^2, b^2, ab: horizontal pass first.
    const std::size_t h = a.height();
    std::vector<std::array<double, 5>> horiz(h * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x)
        {
            std::array<double, 5> acc{};
            for (std::size_t k = 0; k < kWindow; ++k)
            {
                const double p = ga[y * width + x + k];
                const double q = gb[y * width + x + k];
                acc[0] += w[k] * p;
                acc[1] += w[k] * q;
                acc[2] += w[k] * p * p;
                acc[3] += w[k] * q * q;
                acc[4] += w[k] * p * q;
            }
            horiz[y * ow + x] = acc;
        }
    double total = 0.0;
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
        {
            std::array<double, 5> m{};
            for (std::size_t k = 0; k < kWindow; ++k)
                for (std::size_t c = 0; c < 5; ++c)
                    m[c] += w[k] * horiz[(y + k) * ow + x][c];
            const double va = m[2] - m[0] * m[0];
            const double vb = m[3] - m[1] * m[1];
            const double cov = m[4] - m[0] * m[1];
            total += ((2.0 * m[0] * m[1] + kC1) * (2.0 * cov + kC2)) /
                     ((m[0] * m[0] + m[1] * m[1] + kC1) * (va + vb + kC2));
        }
    return total / static_cast<double>(oh * ow);
}

DeltaE delta_e(const ImageBuf& a, const ImageBuf& b)
{
    check_pair(a, b, "delta_e");
    if (a.colorspace() != ColorSpace::srgb || b.colorspace() != ColorSpace::srgb)
        throw ContractError("delta_e: both images must be tagged srgb, got " +
                            std::string(to_string(a.colorspace())) + " and " +
                            std::string(to_string(b.colorspace())));
    const auto la = linear_to_lab(srgb_linear(a, Transfer::to_linear));
    const auto lb = linear_to_lab(srgb_linear(b, Transfer::to_linear));
    DeltaE out;
    out.map.resize(la.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < la.size(); ++k)
    {
        out.map[k] = delta_e76(la[k], lb[k]);
        sum += out.map[k];
    }
    out.mean = sum / static_cast<double>(la.size());
    std::vector<double> sorted = out.map;
    std::sort(sorted.begin(), sorted.end());
    const double pos = 0.95 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    out.p95 = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    return out;
}

std::string MetricsReport::to_json() const
{
    nlohmann::ordered_json j;
    j["psnr_db"] = psnr_db;
    j["ssim"] = ssim;
    j["delta_e_mean"] = delta_e_mean;
    j["delta_e_p95"] = delta_e_p95;
    return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(std::string_view text)
{
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw FormatError(std::string("metrics report is not valid JSON: ") + e.what());
    }
    MetricsReport r;
    auto field = [&](const char* key, double& dst) {
        if (!j.is_object() || !j.contains(key) || !j[key].is_number())
            throw FormatError(std::string("metrics report is missing number '") + key + "'");
        dst = j[key].get<double>();
    };
    field("psnr_db", r.psnr_db);
    field("ssim", r.ssim);
    field("delta_e_mean", r.delta_e_mean);
    field("delta_e_p95", r.delta_e_p95);
    return r;
}

MetricsReport evaluate_metrics(const ImageBuf& prediction, const ImageBuf& reference)
{
    MetricsReport r;
    r.psnr_db = psnr(prediction, reference);
    r.ssim = ssim(prediction, reference);
    const DeltaE de = delta_e(prediction, reference);
    r.delta_e_mean = de.mean;
    r.delta_e_p95 = de.p95;
    return r;
}

} // namespace kanmatch
