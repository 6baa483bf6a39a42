// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "kanmatch/error.hpp"
#include "kanmatch/fitting.hpp"
#include "kanmatch/kan.hpp"
#include "kanmatch/param_map_io.hpp"
#include "test_helpers.hpp"

using namespace kanmatch;

namespace
{

double max_abs_diff(const Rgb& a, const Rgb& b)
{
    return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])});
}

KanParams identity_fit()
{
    auto& g = test::rng();
    CorrespondenceSet corr;
    for (int n = 0; n < 500; ++n)
    {
        const Rgb x = test::random_rgb(g);
        corr.samples.push_back({x, x, {}});
    }
    return fit_global_ls(corr);
}

double mse(const ImageBuf& a, const ImageBuf& b)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k)
        s += (a.data()[k] - b.data()[k]) * (a.data()[k] - b.data()[k]);
    return s / static_cast<double>(a.data().size());
}

} // namespace

TEST_CASE("zero parameters give zero output")
{
    const KanParams p;
    CHECK(kan_eval(p, {0.3, 0.6, 0.9}) == Rgb{0.0, 0.0, 0.0});
}

TEST_CASE("identity transforms")
{
    const Rgb x{0.2, 0.5, 0.8};
    CHECK(max_abs_diff(kan_eval(identity_params(), x), x) < 1e-12);
    CHECK(max_abs_diff(kan_eval(identity_fit(), x), x) < 1e-5);
}

TEST_CASE("gauge invariance of the spline gain")
{
    auto& g = test::rng();
    for (int trial = 0; trial < 100; ++trial)
    {
        const KanParams p = test::random_params(g);
        for (double alpha : {0.1, 1.0, 3.7, 10.0})
        {
            KanParams q = p;
            for (std::size_t ij = 0; ij < 9; ++ij)
            {
                q.v[ij] *= alpha;
                for (std::size_t m = 0; m < kBasisCount; ++m)
                    q.c[ij * kBasisCount + m] /= alpha;
            }
            const Rgb x = test::random_rgb(g);
            CHECK(max_abs_diff(kan_eval(p, x), kan_eval(q, x)) < 1e-9);
        }
    }
}

TEST_CASE("collapsed evaluation")
{
    auto& g = test::rng();
    KanParams p = test::random_params(g);

    SUBCASE("unit gains copy the coefficients")
    {
        p.v.fill(1.0);
        CHECK(collapse(p).w == p.c);
    }
    SUBCASE("zero gains leave the residual term only")
    {
        p.v.fill(0.0);
        const CollapsedParams cp = collapse(p);
        for (double w : cp.w)
            CHECK(w == 0.0);
        const Rgb x{0.1, 0.4, 0.7};
        for (std::size_t j = 0; j < 3; ++j)
        {
            double expected = 0.0;
            for (std::size_t i = 0; i < 3; ++i)
                expected += p.u[KanParams::pair(i, j)] * silu(x[i]);
            CHECK(std::abs(kan_eval(p, x)[j] - expected) < 1e-14);
        }
    }
    SUBCASE("matches kan_eval on random inputs")
    {
        const CollapsedParams cp = collapse(p);
        for (int n = 0; n < 100; ++n)
        {
            const Rgb x = test::random_rgb(g);
            CHECK(max_abs_diff(kan_eval(p, x), collapsed_eval(cp, x)) < 1e-12);
        }
        const KanParams back = expand(cp);
        const Rgb x = test::random_rgb(g);
        CHECK(max_abs_diff(kan_eval(back, x), kan_eval(p, x)) < 1e-12);
    }
}

TEST_CASE("spline coefficients only affect their output channel")
{
    auto& g = test::rng();
    const KanParams p = test::random_params(g);
    const Rgb x{0.33, 0.52, 0.71};
    const Rgb base = kan_eval(p, x);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t m = 0; m < kBasisCount; ++m)
            {
                KanParams q = p;
                q.c[KanParams::coeff(i, j, m)] += 0.5;
                const Rgb y = kan_eval(q, x);
                for (std::size_t o = 0; o < 3; ++o)
                    if (o != j)
                        CHECK(y[o] == base[o]);
            }
}

TEST_CASE("non-finite parameters are rejected")
{
    KanParams p = identity_params();
    p.c[17] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(kan_eval(p, {0.5, 0.5, 0.5}), DomainError);
    CHECK_THROWS_AS(kan_eval(identity_params(), {0.5, std::numeric_limits<double>::infinity(), 0.5}),
                    DomainError);
}

TEST_CASE("flat storage order")
{
    KanParams p;
    p.u[KanParams::pair(1, 2)] = 1.0;
    p.v[KanParams::pair(2, 0)] = 2.0;
    p.c[KanParams::coeff(0, 1, 3)] = 3.0;
    const auto f = p.flatten();
    CHECK(f[1 * 3 + 2] == 1.0);
    CHECK(f[9 + 2 * 3 + 0] == 2.0);
    CHECK(f[18 + (0 * 3 + 1) * 8 + 3] == 3.0);
    CHECK(KanParams::from_flat(f).flatten() == f);
    CHECK_THROWS_AS(KanParams::from_flat(std::vector<double>(89)), ContractError);
}

TEST_CASE("parameter sampling")
{
    auto& g = test::rng();

    SUBCASE("single tile is used everywhere")
    {
        const KanParams p = test::random_params(g);
        const ParamMap map = ParamMap::uniform(p, 20, 30);
        for (double x : {0.0, 7.5, 29.0})
            for (double y : {0.0, 11.0, 19.0})
                CHECK(sample_params(map, x, y).flatten() == p.flatten());
    }

    // 9x9 image on a 3x3 grid: tile centers at pixels 1, 4, 7.
    ParamMap map = ParamMap::uniform(KanParams{}, 9, 9, 3, 3);
    for (auto& p : map.params)
        p = test::random_params(g);

    SUBCASE("tile centers return the tile's parameters")
    {
        CHECK(sample_params(map, 4.0, 1.0).flatten() == map.tile(0, 1).flatten());
        CHECK(sample_params(map, 7.0, 7.0).flatten() == map.tile(2, 2).flatten());
    }
    SUBCASE("midpoint of horizontal neighbours is their mean")
    {
        const auto mid = sample_params(map, 2.5, 1.0).flatten();
        const auto a = map.tile(0, 0).flatten();
        const auto b = map.tile(0, 1).flatten();
        for (std::size_t k = 0; k < mid.size(); ++k)
            CHECK(std::abs(mid[k] - 0.5 * (a[k] + b[k])) < 1e-15);
    }
    SUBCASE("edges clamp to the outer tiles")
    {
        CHECK(sample_params(map, 0.0, 0.0).flatten() == map.tile(0, 0).flatten());
        CHECK(sample_params(map, 8.0, 0.0).flatten() == map.tile(0, 2).flatten());
    }
    SUBCASE("nearest picks the enclosing tile")
    {
        map.interp = Interp::nearest;
        CHECK(sample_params(map, 2.0, 3.0).flatten() == map.tile(1, 0).flatten());
        CHECK(sample_params(map, 6.0, 8.0).flatten() == map.tile(2, 2).flatten());
    }
    SUBCASE("out of range coordinates")
    {
        CHECK_THROWS_AS(sample_params(map, 9.0, 0.0), DomainError);
        CHECK_THROWS_AS(sample_params(map, 0.0, -1.0), DomainError);
    }
}

TEST_CASE("apply")
{
    auto& g = test::rng();
    const ImageBuf img = test::random_image(g, 24, 32);

    SUBCASE("identity fit preserves the image")
    {
        const ImageBuf out = apply(ParamMap::uniform(identity_fit(), 24, 32), img);
        CHECK(-10.0 * std::log10(mse(out, img)) >= 90.0);
    }
    SUBCASE("zero map gives black")
    {
        const ImageBuf out = apply(ParamMap::uniform(KanParams{}, 24, 32), img);
        for (double v : out.data())
            CHECK(v == 0.0);
    }
    SUBCASE("deterministic and clamped")
    {
        ParamMap map = ParamMap::uniform(KanParams{}, 24, 32, 3, 4);
        for (auto& p : map.params)
            p = test::random_params(g);
        const ImageBuf a = apply(map, img);
        const ImageBuf b = apply(map, img);
        CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
        for (double v : a.data())
            CHECK((v >= 0.0 && v <= 1.0));
    }
    SUBCASE("dimension mismatch")
    {
        CHECK_THROWS_AS(apply(ParamMap::uniform(identity_params(), 24, 31), img), ContractError);
    }
    SUBCASE("changing one tile only affects its bilinear neighbourhood")
    {
        // 32x32 image, 4x4 tiles of 8 px; centers at 3.5 + 8 t.
        const ImageBuf sq = test::random_image(g, 32, 32);
        ParamMap map = ParamMap::uniform(identity_params(), 32, 32, 4, 4);
        for (auto& p : map.params)
            p = test::random_params(g, 0.3);
        const ImageBuf before = apply(map, sq);
        map.tile(1, 2) = test::random_params(g, 0.3);
        const ImageBuf after = apply(map, sq);
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x)
            {
                const bool inside = y > 3.5 && y < 19.5 && x > 11.5 && x < 27.5;
                if (!inside)
                    CHECK(before.pixel(y, x) == after.pixel(y, x));
            }
    }
}

TEST_CASE("parameter map file")
{
    auto& g = test::rng();
    ParamMap map = ParamMap::uniform(KanParams{}, 40, 50, 2, 3, Interp::nearest);
    for (auto& p : map.params)
        p = test::random_params(g);

    std::stringstream ss;
    write_param_map(ss, map);
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() == 33 + 6 * 90 * 4);
    CHECK(bytes.substr(0, 4) == "CMKN");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[16]) == 5);
    CHECK(static_cast<unsigned char>(bytes[20]) == 3);
    CHECK(bytes[32] == 0);

    SUBCASE("round trip at float precision")
    {
        std::stringstream in(bytes);
        const ParamMap back = read_param_map(in);
        CHECK(back.height_t == 2);
        CHECK(back.width_t == 3);
        CHECK(back.source_h == 40);
        CHECK(back.source_w == 50);
        CHECK(back.interp == Interp::nearest);
        for (std::size_t t = 0; t < 6; ++t)
        {
            const auto a = map.params[t].flatten();
            const auto b = back.params[t].flatten();
            for (std::size_t k = 0; k < 90; ++k)
                CHECK(b[k] == static_cast<double>(static_cast<float>(a[k])));
        }
        std::stringstream again;
        write_param_map(again, back);
        CHECK(again.str() == bytes);
    }
    SUBCASE("bad magic")
    {
        std::string bad = bytes;
        bad[0] = 'X';
        std::stringstream in(bad);
        CHECK_THROWS_AS(read_param_map(in), FormatError);
    }
    SUBCASE("unknown version")
    {
        std::string bad = bytes;
        bad[4] = 2;
        std::stringstream in(bad);
        CHECK_THROWS_AS(read_param_map(in), FormatError);
    }
    SUBCASE("truncated payload")
    {
        std::stringstream in(bytes.substr(0, bytes.size() - 3));
        CHECK_THROWS_AS(read_param_map(in), FormatError);
    }
}
