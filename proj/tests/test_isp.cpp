// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "kanmatch/error.hpp"
#include "kanmatch/fitting.hpp"
#include "kanmatch/isp.hpp"
#include "kanmatch/metrics.hpp"
#include "test_helpers.hpp"

using namespace kanmatch;
using kanmatch::test::uniform;

namespace
{

IspConfig gamma_config(double g)
{
    IspConfig cfg;
    cfg.tone.kind = ToneKind::gamma;
    cfg.tone.gamma = g;
    return cfg;
}

IspConfig filmic_config(double knee, double slope)
{
    IspConfig cfg;
    cfg.tone.kind = ToneKind::filmic_knee;
    cfg.tone.knee = knee;
    cfg.tone.slope = slope;
    return cfg;
}

ImageBuf random_raw(std::mt19937_64& g, std::size_t h, std::size_t w)
{
    ImageBuf img(h, w, ColorSpace::raw);
    for (auto& v : img.data())
        v = uniform(g, 0.02, 0.98);
    return img;
}

bool bitwise_equal(const ImageBuf& a, const ImageBuf& b)
{
    return a.same_shape(b) && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

} // namespace

TEST_CASE("make_scene")
{
    for (auto content : {SceneContent::patches, SceneContent::smooth_field, SceneContent::mixed})
    {
        SceneSpec spec;
        spec.height = 48;
        spec.width = 64;
        spec.seed = 7;
        spec.content = content;
        const ImageBuf a = make_scene(spec);
        const ImageBuf b = make_scene(spec);
        CHECK(a.colorspace() == ColorSpace::raw);
        CHECK(a.height() == 48);
        CHECK(a.width() == 64);
        CHECK(bitwise_equal(a, b));
        for (std::size_t c = 0; c < 3; ++c)
        {
            double lo = 1.0;
            double hi = 0.0;
            for (std::size_t p = 0; p < a.pixel_count(); ++p)
            {
                lo = std::min(lo, a.data()[p * 3 + c]);
                hi = std::max(hi, a.data()[p * 3 + c]);
            }
            CHECK(lo < 0.1);
            CHECK(hi > 0.9);
            CHECK(hi - lo >= 0.8);
        }
        spec.seed = 8;
        CHECK_FALSE(bitwise_equal(a, make_scene(spec)));
    }

    SceneSpec spec;
    spec.content = SceneContent::patches;
    const ImageBuf p = make_scene(spec);
    std::set<Rgb> colors;
    for (std::size_t y = 0; y < p.height(); ++y)
        for (std::size_t x = 0; x < p.width(); ++x)
            colors.insert(p.pixel(y, x));
    CHECK(colors.size() >= 20);

    spec.height = 15;
    CHECK_THROWS_AS(make_scene(spec), ContractError);
}

TEST_CASE("tone curves")
{
    CHECK(gamma_config(2.2).tone(0.5) == doctest::Approx(0.72974).epsilon(1e-5));
    CHECK(gamma_config(2.2).tone(0.5) == std::pow(0.5, 1.0 / 2.2));

    const ToneCurve f = filmic_config(0.8, 1.1).tone;
    CHECK(f(0.0) == 0.0);
    CHECK(f(1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(f(0.5) == doctest::Approx(0.55).epsilon(1e-15));
    const double e = 1e-7;
    CHECK(f(0.8 + e) == doctest::Approx(f(0.8)).epsilon(1e-6));
    CHECK((f(0.8 + e) - f(0.8)) / e == doctest::Approx(1.1).epsilon(1e-5));
    double prev = 0.0;
    for (int k = 0; k <= 1000; ++k)
    {
        const double v = f(k / 1000.0);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS_AS(filmic_config(0.8, 1.2).validate(), ContractError);
    CHECK_NOTHROW(filmic_config(0.8, 1.1).validate());
    CHECK_THROWS_AS(filmic_config(1.0, 1.0).validate(), ContractError);
    CHECK_THROWS_AS(gamma_config(0.0).validate(), ContractError);

    IspConfig pw;
    pw.tone.kind = ToneKind::piecewise_linear;
    pw.tone.points = {{0.0, 0.0}, {0.25, 0.5}, {1.0, 1.0}};
    CHECK_NOTHROW(pw.validate());
    CHECK(pw.tone(0.125) == 0.25);
    CHECK(pw.tone(0.625) == doctest::Approx(0.75).epsilon(1e-15));
    pw.tone.points = {{0.0, 0.0}, {0.5, 0.7}, {0.7, 0.6}, {1.0, 1.0}};
    CHECK_THROWS_AS(pw.validate(), ContractError);
    pw.tone.points = {{0.0, 0.1}, {1.0, 1.0}};
    CHECK_THROWS_AS(pw.validate(), ContractError);
}

TEST_CASE("render")
{
    auto& g = kanmatch::test::rng();
    const ImageBuf raw = random_raw(g, 20, 24);
    const ImageBuf same = render(raw, IspConfig{});
    CHECK(same.colorspace() == ColorSpace::srgb);
    CHECK(std::equal(same.data().begin(), same.data().end(), raw.data().begin()));

    ImageBuf tagged = raw;
    tagged.set_colorspace(ColorSpace::srgb);
    CHECK_THROWS_AS(render(tagged, IspConfig{}), ContractError);
    CHECK_THROWS_AS(render(raw, filmic_config(0.9, 1.5)), ContractError);

    IspConfig shaded;
    shaded.shading.kind = ShadingKind::radial;
    shaded.shading.strength = 0.5;
    CHECK(shaded.shading.gain(0.0, 0.0, 33, 33) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(shaded.shading.gain(16.0, 16.0, 33, 33) == 1.0);
    CHECK(shaded.shading.gain(0.0, 0.0, 33, 33) < shaded.shading.gain(16.0, 16.0, 33, 33));
    const ImageBuf grey = render(ImageBuf::filled(33, 33, {0.6, 0.6, 0.6}, ColorSpace::raw), shaded);
    CHECK(grey.at(0, 0, 0) < grey.at(16, 16, 0));
    shaded.shading.strength = 1.0;
    CHECK_THROWS_AS(shaded.validate(), ContractError);
}

TEST_CASE("render is monotone for diagonal non-negative matrices without shading")
{
    auto& g = kanmatch::test::rng();
    IspConfig cfg = filmic_config(0.7, 1.15);
    cfg.matrix = {{{0.9, 0.0, 0.0}, {0.0, 1.1, 0.0}, {0.0, 0.0, 0.8}}};
    ImageBuf a(1, 500, ColorSpace::raw);
    ImageBuf b(1, 500, ColorSpace::raw);
    for (std::size_t x = 0; x < 500; ++x)
        for (std::size_t c = 0; c < 3; ++c)
        {
            const double lo = uniform(g);
            a.at(0, x, c) = lo;
            b.at(0, x, c) = uniform(g, lo, 1.0);
        }
    const ImageBuf ra = render(a, cfg);
    const ImageBuf rb = render(b, cfg);
    for (std::size_t k = 0; k < ra.data().size(); ++k)
        CHECK(ra.data()[k] <= rb.data()[k]);
}

TEST_CASE("noise is counter based")
{
    auto& g = kanmatch::test::rng();
    CHECK(hashed_gaussian(3, 1, 2, 0) == hashed_gaussian(3, 1, 2, 0));
    CHECK(hashed_gaussian(3, 1, 2, 0) != hashed_gaussian(3, 2, 1, 0));
    CHECK(hashed_gaussian(3, 1, 2, 0) != hashed_gaussian(4, 1, 2, 0));

    double sum = 0.0;
    double sq = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k)
    {
        const double z = hashed_gaussian(11, static_cast<std::size_t>(k % 500),
                                         static_cast<std::size_t>(k / 500), 1);
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);

    IspConfig cfg;
    cfg.noise_sigma = 0.01;
    cfg.seed = 5;
    const ImageBuf raw = random_raw(g, 16, 16);
    CHECK(bitwise_equal(render(raw, cfg), render(raw, cfg)));

    // Noise off: the output depends only on a pixel's value and position.
    IspConfig clean = gamma_config(2.2);
    clean.shading.kind = ShadingKind::radial;
    clean.shading.strength = 0.3;
    ImageBuf other = random_raw(g, 16, 16);
    for (std::size_t c = 0; c < 3; ++c)
        other.at(5, 9, c) = raw.at(5, 9, c);
    CHECK(render(raw, clean).pixel(5, 9) == render(other, clean).pixel(5, 9));
}

TEST_CASE("make_pair")
{
    SceneSpec spec;
    spec.height = 64;
    spec.width = 64;
    const IspConfig cfg = gamma_config(2.2);
    const SynthPair same = make_pair(spec, cfg, cfg);
    CHECK(same.corr.size() == 256);
    for (const auto& s : same.corr.samples)
    {
        CHECK(s.src == s.tgt);
        CHECK(s.pos.has_value());
    }
    CHECK((*same.corr.samples[17].pos == std::array<double, 2>{4.0, 4.0}));
    CHECK(make_pair(spec, cfg, cfg, 1).corr.size() == 64 * 64);
    const DeltaE de = delta_e(same.src, same.tgt);
    CHECK(de.mean == 0.0);
}

TEST_CASE("ISP config and scene spec JSON")
{
    IspConfig cfg = filmic_config(0.8, 1.1);
    cfg.matrix = {{{0.9, 0.05, 0.0}, {0.1, 0.85, 0.05}, {0.0, 0.1, 0.95}}};
    cfg.shading.kind = ShadingKind::radial;
    cfg.shading.strength = 0.4;
    cfg.noise_sigma = 0.002;
    cfg.seed = 18446744073709551557ULL;
    const std::string text = cfg.to_json();
    const IspConfig back = IspConfig::from_json(text);
    CHECK(back.to_json() == text);
    CHECK(back.seed == cfg.seed);
    CHECK(back.matrix == cfg.matrix);

    IspConfig pw;
    pw.tone.kind = ToneKind::piecewise_linear;
    pw.tone.points = {{0.0, 0.0}, {0.3, 0.5}, {1.0, 1.0}};
    CHECK(IspConfig::from_json(pw.to_json()).tone.points == pw.tone.points);

    auto message = [](const std::string& doc) {
        try
        {
            IspConfig::from_json(doc);
        }
        catch (const ContractError& e)
        {
            return std::string(e.what());
        }
        return std::string();
    };
    const std::string ident = R"("matrix": [[1,0,0],[0,1,0],[0,0,1]])";
    CHECK(message("{" + ident + R"(, "shading": {"kind": "none"}, "noise_sigma": 0, "seed": 0})")
              .find("'tone'") != std::string::npos);
    CHECK(message("{" + ident +
                  R"(, "tone": {"kind": "filmic_knee", "slope": 1.1}, "shading": {"kind": "none"}, "noise_sigma": 0, "seed": 0})")
              .find("'knee'") != std::string::npos);
    CHECK(message("{" + ident +
                  R"(, "tone": {"kind": "gamma", "gamma": 2.2}, "shading": {"kind": "none"}, "noise_sigma": 0})")
              .find("'seed'") != std::string::npos);
    CHECK(message(R"({"matrix": [[1,0],[0,1]]})").find("matrix") != std::string::npos);
    CHECK_FALSE(message("{oops").empty());

    SceneSpec spec;
    spec.height = 32;
    spec.width = 48;
    spec.seed = 9;
    spec.content = SceneContent::patches;
    const SceneSpec sb = SceneSpec::from_json(spec.to_json());
    CHECK(sb.height == 32);
    CHECK(sb.width == 48);
    CHECK(sb.seed == 9);
    CHECK(sb.content == SceneContent::patches);
    CHECK_THROWS_AS(SceneSpec::from_json(R"({"height": 32, "width": 32, "seed": 1})"),
                    ContractError);
    CHECK_THROWS_AS(
        SceneSpec::from_json(R"({"height": 8, "width": 32, "seed": 1, "content": "mixed"})"),
        ContractError);
}

TEST_CASE("fit_tiled on a uniform ISP mapping gives matching tiles")
{
    auto& g = kanmatch::test::rng();
    // Per-pixel random raw colors so every tile sees the whole color range.
    const ImageBuf raw = random_raw(g, 64, 64);
    const ImageBuf src = render(raw, gamma_config(2.2));
    const ImageBuf tgt = render(raw, gamma_config(1.8));
    FitConfig cfg;
    cfg.tile_rows = 4;
    cfg.tile_cols = 4;
    const ParamMap map = fit_tiled(src, tgt, cfg);
    // Compare on the colors the tiles were fitted to.
    const auto [lo, hi] = std::minmax_element(src.data().begin(), src.data().end());
    double worst = 0.0;
    for (int k = 0; k < 2000; ++k)
    {
        const Rgb x{uniform(g, *lo, *hi), uniform(g, *lo, *hi), uniform(g, *lo, *hi)};
        const Rgb ref = kan_eval(map.params[0], x);
        for (std::size_t t = 1; t < map.tile_count(); ++t)
        {
            const Rgb y = kan_eval(map.params[t], x);
            for (std::size_t j = 0; j < 3; ++j)
                worst = std::max(worst, std::abs(y[j] - ref[j]));
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("tiled fitting beats a global fit under radial shading")
{
    SceneSpec spec;
    spec.height = 128;
    spec.width = 128;
    spec.seed = 3;
    IspConfig target = filmic_config(0.8, 1.1);
    target.shading.kind = ShadingKind::radial;
    target.shading.strength = 0.4;
    const SynthPair pair = make_pair(spec, gamma_config(2.2), target);
    FitConfig cfg;
    const ParamMap tiled = fit_tiled(pair.src, pair.tgt, cfg);
    const ParamMap global =
        ParamMap::uniform(fit_global_ls(correspondences_from_images(pair.src, pair.tgt)), 128, 128);
    const double de_tiled = delta_e(apply(tiled, pair.src), pair.tgt).mean;
    const double de_global = delta_e(apply(global, pair.src), pair.tgt).mean;
    CHECK(de_tiled < de_global);
}
