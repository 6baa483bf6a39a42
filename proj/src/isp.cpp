// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/isp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "kanmatch/error.hpp"

namespace kanmatch
{

namespace
{

constexpr double kSceneLo = 0.02;
constexpr double kSceneHi = 0.98;
constexpr std::size_t kPatchGrid = 6;
constexpr std::size_t kRectangles = 24;
constexpr int kWaves = 4;

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

class Rng
{
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    double uniform(double lo = 0.0, double hi = 1.0)
    {
        return lo + (hi - lo) * unit_double(splitmix64(state_));
    }

private:
    std::uint64_t state_;
};

// Config parsing helpers: `where` is the dotted field path used in messages.
const json& require(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object())
        throw ContractError(where + ": expected a JSON object");
    if (!obj.contains(key))
        throw ContractError(where + ": missing field '" + key + "'");
    return obj[key];
}

double number(const json& v, const std::string& field)
{
    if (!v.is_number())
        throw ContractError("field '" + field + "' must be a number");
    return v.get<double>();
}

std::uint64_t unsigned_int(const json& v, const std::string& field)
{
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ContractError("field '" + field + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

std::string text(const json& v, const std::string& field)
{
    if (!v.is_string())
        throw ContractError("field '" + field + "' must be a string");
    return v.get<std::string>();
}

json parse(std::string_view doc, const char* what)
{
    try
    {
        return json::parse(doc);
    }
    catch (const json::parse_error& e)
    {
        throw ContractError(std::string(what) + " is not valid JSON: " + e.what());
    }
}

std::vector<std::vector<double>> smooth_field(Rng& rng, std::size_t h, std::size_t w)
{
    std::vector<std::vector<double>> out(3, std::vector<double>(h * w, 0.0));
    for (std::size_t c = 0; c < 3; ++c)
        for (int k = 0; k < kWaves; ++k)
        {
            const double amp = rng.uniform(0.3, 1.0);
            const double fx = rng.uniform(0.5, 2.5);
            const double fy = rng.uniform(0.5, 2.5);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    out[c][y * w + x] +=
                        amp * std::cos(2.0 * std::numbers::pi *
                                           (fx * static_cast<double>(x) / static_cast<double>(w) +
                                            fy * static_cast<double>(y) / static_cast<double>(h)) +
                                       phase);
        }
    return out;
}

} // namespace

std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double unit_double(std::uint64_t bits) noexcept
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double hashed_gaussian(std::uint64_t seed, std::size_t x, std::size_t y, std::size_t c) noexcept
{
    std::uint64_t s = seed;
    splitmix64(s);
    s ^= static_cast<std::uint64_t>(x) * 0xD1B54A32D192ED03ULL;
    splitmix64(s);
    s ^= static_cast<std::uint64_t>(y) * 0xABC98388FB8FAC03ULL;
    splitmix64(s);
    s ^= static_cast<std::uint64_t>(c) * 0x8CB92BA72F3D8DD7ULL;
    // Box-Muller; u1 is in (0, 1] so the log is finite.
    const double u1 = (static_cast<double>(splitmix64(s) >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = unit_double(splitmix64(s));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string_view to_string(ToneKind kind)
{
    switch (kind)
    {
    case ToneKind::gamma:
        return "gamma";
    case ToneKind::filmic_knee:
        return "filmic_knee";
    case ToneKind::piecewise_linear:
        return "piecewise_linear";
    }
    return "gamma";
}

std::string_view to_string(ShadingKind kind)
{
    return kind == ShadingKind::radial ? "radial" : "none";
}

std::string_view to_string(SceneContent content)
{
    switch (content)
    {
    case SceneContent::patches:
        return "patches";
    case SceneContent::smooth_field:
        return "smooth_field";
    case SceneContent::mixed:
        return "mixed";
    }
    return "mixed";
}

double ToneCurve::operator()(double v) const noexcept
{
    switch (kind)
    {
    case ToneKind::gamma:
        return v <= 0.0 ? 0.0 : std::pow(v, 1.0 / gamma);
    case ToneKind::filmic_knee:
    {
        if (v <= knee)
            return slope * v;
        const double d = v - knee;
        const double a = (1.0 - slope) / ((1.0 - knee) * (1.0 - knee));
        return slope * knee + slope * d + a * d * d;
    }
    case ToneKind::piecewise_linear:
    {
        if (v <= points.front()[0])
            return points.front()[1];
        for (std::size_t k = 1; k < points.size(); ++k)
            if (v <= points[k][0])
            {
                const auto& p = points[k - 1];
                const auto& q = points[k];
                return p[1] + (q[1] - p[1]) * (v - p[0]) / (q[0] - p[0]);
            }
        return points.back()[1];
    }
    }
    return v;
}

void ToneCurve::validate() const
{
    switch (kind)
    {
    case ToneKind::gamma:
        if (!(std::isfinite(gamma) && gamma > 0.0))
            throw ContractError("tone.gamma must be a positive finite value");
        return;
    case ToneKind::filmic_knee:
        if (!(std::isfinite(knee) && knee > 0.0 && knee < 1.0))
            throw ContractError("tone.knee must lie in (0, 1)");
        if (!(std::isfinite(slope) && slope > 0.0))
            throw ContractError("tone.slope must be a positive finite value");
        if (slope * (1.0 + knee) > 2.0)
            throw ContractError("filmic_knee tone is not monotone: slope * (1 + knee) = " +
                                std::to_string(slope * (1.0 + knee)) + " exceeds 2");
        return;
    case ToneKind::piecewise_linear:
        if (points.size() < 2)
            throw ContractError("tone.points needs at least two points");
        if (points.front()[0] != 0.0 || points.front()[1] != 0.0 || points.back()[0] != 1.0 ||
            points.back()[1] != 1.0)
            throw ContractError("tone.points must start at (0, 0) and end at (1, 1)");
        for (std::size_t k = 1; k < points.size(); ++k)
        {
            if (!(points[k][0] > points[k - 1][0]))
                throw ContractError("tone.points x values must increase strictly");
            if (!(points[k][1] >= points[k - 1][1]))
                throw ContractError("piecewise_linear tone is not monotone at point " +
                                    std::to_string(k));
        }
        return;
    }
}

double Shading::gain(double x, double y, std::size_t height, std::size_t width) const noexcept
{
    if (kind == ShadingKind::none)
        return 1.0;
    const double cx = center[0] * static_cast<double>(width - 1);
    const double cy = center[1] * static_cast<double>(height - 1);
    double r2max = 0.0;
    for (double px : {0.0, static_cast<double>(width - 1)})
        for (double py : {0.0, static_cast<double>(height - 1)})
            r2max = std::max(r2max, (px - cx) * (px - cx) + (py - cy) * (py - cy));
    if (r2max == 0.0)
        return 1.0;
    const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    return 1.0 - strength * r2 / r2max;
}

void IspConfig::validate() const
{
    for (const auto& row : matrix)
        for (double v : row)
            if (!std::isfinite(v))
                throw ContractError("ISP matrix must be finite");
    tone.validate();
    if (shading.kind == ShadingKind::radial)
    {
        if (!(shading.strength >= 0.0 && shading.strength < 1.0))
            throw ContractError("shading.strength must lie in [0, 1)");
        for (double c : shading.center)
            if (!(c >= 0.0 && c <= 1.0))
                throw ContractError("shading.center must lie in [0, 1]^2");
    }
    if (!(std::isfinite(noise_sigma) && noise_sigma >= 0.0))
        throw ContractError("noise_sigma must be a finite value >= 0");
}

std::string IspConfig::to_json() const
{
    ojson j;
    j["matrix"] = ojson::array();
    for (const auto& row : matrix)
        j["matrix"].push_back(row);
    ojson t;
    t["kind"] = std::string(to_string(tone.kind));
    if (tone.kind == ToneKind::gamma)
        t["gamma"] = tone.gamma;
    else if (tone.kind == ToneKind::filmic_knee)
    {
        t["knee"] = tone.knee;
        t["slope"] = tone.slope;
    }
    else
        t["points"] = tone.points;
    j["tone"] = t;
    ojson s;
    s["kind"] = std::string(to_string(shading.kind));
    if (shading.kind == ShadingKind::radial)
    {
        s["strength"] = shading.strength;
        s["center"] = shading.center;
    }
    j["shading"] = s;
    j["noise_sigma"] = noise_sigma;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

IspConfig IspConfig::from_json(std::string_view doc)
{
    const json j = parse(doc, "ISP config");
    IspConfig cfg;

    const json& m = require(j, "matrix", "ISP config");
    if (!m.is_array() || m.size() != 3)
        throw ContractError("field 'matrix' must be a 3x3 array");
    for (std::size_t i = 0; i < 3; ++i)
    {
        if (!m[i].is_array() || m[i].size() != 3)
            throw ContractError("field 'matrix' must be a 3x3 array");
        for (std::size_t k = 0; k < 3; ++k)
            cfg.matrix[i][k] = number(m[i][k], "matrix");
    }

    const json& t = require(j, "tone", "ISP config");
    const std::string kind = text(require(t, "kind", "tone"), "tone.kind");
    if (kind == "gamma")
    {
        cfg.tone.kind = ToneKind::gamma;
        cfg.tone.gamma = number(require(t, "gamma", "tone"), "tone.gamma");
    }
    else if (kind == "filmic_knee")
    {
        cfg.tone.kind = ToneKind::filmic_knee;
        cfg.tone.knee = number(require(t, "knee", "tone"), "tone.knee");
        cfg.tone.slope = number(require(t, "slope", "tone"), "tone.slope");
    }
    else if (kind == "piecewise_linear")
    {
        cfg.tone.kind = ToneKind::piecewise_linear;
        const json& pts = require(t, "points", "tone");
        if (!pts.is_array())
            throw ContractError("field 'tone.points' must be an array of [x, y] pairs");
        for (const auto& p : pts)
        {
            if (!p.is_array() || p.size() != 2)
                throw ContractError("field 'tone.points' must be an array of [x, y] pairs");
            cfg.tone.points.push_back({number(p[0], "tone.points"), number(p[1], "tone.points")});
        }
    }
    else
    {
        throw ContractError("field 'tone.kind' must be gamma, filmic_knee or piecewise_linear");
    }

    const json& s = require(j, "shading", "ISP config");
    const std::string skind = text(require(s, "kind", "shading"), "shading.kind");
    if (skind == "radial")
    {
        cfg.shading.kind = ShadingKind::radial;
        cfg.shading.strength = number(require(s, "strength", "shading"), "shading.strength");
        if (s.contains("center"))
        {
            const json& c = s["center"];
            if (!c.is_array() || c.size() != 2)
                throw ContractError("field 'shading.center' must be [u, v]");
            cfg.shading.center = {number(c[0], "shading.center"), number(c[1], "shading.center")};
        }
    }
    else if (skind != "none")
    {
        throw ContractError("field 'shading.kind' must be none or radial");
    }

    cfg.noise_sigma = number(require(j, "noise_sigma", "ISP config"), "noise_sigma");
    cfg.seed = unsigned_int(require(j, "seed", "ISP config"), "seed");
    cfg.validate();
    return cfg;
}

void SceneSpec::validate() const
{
    if (height < 16 || width < 16)
        throw ContractError("scene must be at least 16x16, got " + std::to_string(height) + "x" +
                            std::to_string(width));
}

std::string SceneSpec::to_json() const
{
    ojson j;
    j["height"] = height;
    j["width"] = width;
    j["seed"] = seed;
    j["content"] = std::string(to_string(content));
    return j.dump(2) + "\n";
}

SceneSpec SceneSpec::from_json(std::string_view doc)
{
    const json j = parse(doc, "scene spec");
    SceneSpec spec;
    spec.height = unsigned_int(require(j, "height", "scene spec"), "height");
    spec.width = unsigned_int(require(j, "width", "scene spec"), "width");
    spec.seed = unsigned_int(require(j, "seed", "scene spec"), "seed");
    const std::string content = text(require(j, "content", "scene spec"), "content");
    if (content == "patches")
        spec.content = SceneContent::patches;
    else if (content == "smooth_field")
        spec.content = SceneContent::smooth_field;
    else if (content == "mixed")
        spec.content = SceneContent::mixed;
    else
        throw ContractError("field 'content' must be patches, smooth_field or mixed");
    spec.validate();
    return spec;
}

ImageBuf make_scene(const SceneSpec& spec)
{
    spec.validate();
    const std::size_t h = spec.height;
    const std::size_t w = spec.width;
    Rng rng(spec.seed);
    std::vector<std::vector<double>> ch;

    if (spec.content == SceneContent::patches)
    {
        ch.assign(3, std::vector<double>(h * w));
        std::vector<std::array<double, 3>> cells(kPatchGrid * kPatchGrid);
        for (auto& cell : cells)
            for (auto& v : cell)
                v = rng.uniform();
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
            {
                const std::size_t r = y * kPatchGrid / h;
                const std::size_t c = x * kPatchGrid / w;
                for (std::size_t k = 0; k < 3; ++k)
                    ch[k][y * w + x] = cells[r * kPatchGrid + c][k];
            }
    }
    else
    {
        ch = smooth_field(rng, h, w);
        if (spec.content == SceneContent::mixed)
        {
            // Rectangles are drawn in the field's range so they survive the rescale.
            std::array<double, 3> lo{};
            std::array<double, 3> hi{};
            for (std::size_t k = 0; k < 3; ++k)
            {
                const auto [mn, mx] = std::minmax_element(ch[k].begin(), ch[k].end());
                lo[k] = *mn;
                hi[k] = *mx;
            }
            for (std::size_t n = 0; n < kRectangles; ++n)
            {
                const double fw = static_cast<double>(w);
                const double fh = static_cast<double>(h);
                const auto rw = static_cast<std::size_t>(rng.uniform(fw / 10.0, fw / 3.0));
                const auto rh = static_cast<std::size_t>(rng.uniform(fh / 10.0, fh / 3.0));
                const auto x0 = static_cast<std::size_t>(rng.uniform(0.0, fw - static_cast<double>(rw)));
                const auto y0 = static_cast<std::size_t>(rng.uniform(0.0, fh - static_cast<double>(rh)));
                std::array<double, 3> color{};
                for (std::size_t k = 0; k < 3; ++k)
                    color[k] = rng.uniform(lo[k], hi[k]);
                for (std::size_t y = y0; y < std::min(h, y0 + rh); ++y)
                    for (std::size_t x = x0; x < std::min(w, x0 + rw); ++x)
                        for (std::size_t k = 0; k < 3; ++k)
                            ch[k][y * w + x] = color[k];
            }
        }
    }

    ImageBuf img(h, w, ColorSpace::raw);
    auto d = img.data();
    for (std::size_t k = 0; k < 3; ++k)
    {
        const auto [mn, mx] = std::minmax_element(ch[k].begin(), ch[k].end());
        const double lo = *mn;
        const double span = *mx - *mn;
        for (std::size_t p = 0; p < h * w; ++p)
            d[p * 3 + k] = span > 0.0 ? kSceneLo + (kSceneHi - kSceneLo) * (ch[k][p] - lo) / span
                                      : 0.5;
    }
    return img;
}

ImageBuf render(const ImageBuf& raw, const IspConfig& cfg)
{
    cfg.validate();
    if (raw.colorspace() != ColorSpace::raw)
        throw ContractError("render expects a raw-tagged image, got " +
                            std::string(to_string(raw.colorspace())));
    raw.check_finite();
    ImageBuf out(raw.height(), raw.width(), ColorSpace::srgb);
    for (std::size_t y = 0; y < raw.height(); ++y)
        for (std::size_t x = 0; x < raw.width(); ++x)
        {
            const double gain = cfg.shading.gain(static_cast<double>(x), static_cast<double>(y),
                                                 raw.height(), raw.width());
            Rgb in = raw.pixel(y, x);
            for (auto& v : in)
                v *= gain;
            Rgb o{};
            for (std::size_t j = 0; j < 3; ++j)
            {
                double v = 0.0;
                for (std::size_t i = 0; i < 3; ++i)
                    v += in[i] * cfg.matrix[i][j];
                o[j] = cfg.tone(clamp01(v));
                if (cfg.noise_sigma > 0.0)
                    o[j] += cfg.noise_sigma * hashed_gaussian(cfg.seed, x, y, j);
            }
            out.set_pixel(y, x, o);
        }
    return out;
}

SynthPair make_pair(const SceneSpec& spec, const IspConfig& source, const IspConfig& target,
                    std::size_t stride)
{
    SynthPair pair;
    pair.raw = make_scene(spec);
    pair.src = render(pair.raw, source);
    pair.tgt = render(pair.raw, target);
    pair.corr = correspondences_from_images(pair.src, pair.tgt, stride);
    return pair;
}

} // namespace kanmatch
