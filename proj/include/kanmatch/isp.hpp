// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kanmatch/baselines.hpp"
#include "kanmatch/correspondence.hpp"
#include "kanmatch/image.hpp"

namespace kanmatch
{

enum class ToneKind
{
    gamma,
    filmic_knee,
    piecewise_linear
};

/// Monotone per-channel curve on [0,1] with tone(0) = 0 and tone(1) = 1.
///
/// gamma:            v^(1/gamma)
/// filmic_knee:      slope * v up to `knee`, then the quadratic through
///                   (knee, slope * knee) and (1, 1) with matching slope.
///                   Monotone iff slope * (1 + knee) <= 2.
/// piecewise_linear: interpolates `points`, which run from (0,0) to (1,1).
struct ToneCurve
{
    ToneKind kind = ToneKind::gamma;
    double gamma = 1.0;
    double knee = 0.8;
    double slope = 1.0;
    std::vector<std::array<double, 2>> points;

    double operator()(double v) const noexcept;
    /// Throws ContractError for curves that are not monotone or miss the endpoints.
    void validate() const;
};

enum class ShadingKind
{
    none,
    radial
};

/// gain(x, y) = 1 - strength * r^2 / r_max^2, with r measured from the centre
/// (given as fractions of width and height) and r_max the farthest corner.
struct Shading
{
    ShadingKind kind = ShadingKind::none;
    double strength = 0.0;
    std::array<double, 2> center{0.5, 0.5};

    double gain(double x, double y, std::size_t height, std::size_t width) const noexcept;
};

struct IspConfig
{
    Mat3 matrix = identity_mat3(); // row-vector: out_j = sum_i in_i * matrix[i][j]
    ToneCurve tone;
    Shading shading;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    /// Every field is required except shading.center. Malformed JSON, missing
    /// fields and invalid values raise ContractError naming the field.
    static IspConfig from_json(std::string_view text);
};

enum class SceneContent
{
    patches,
    smooth_field,
    mixed
};

struct SceneSpec
{
    std::size_t height = 64;
    std::size_t width = 64;
    std::uint64_t seed = 0;
    SceneContent content = SceneContent::mixed;

    void validate() const;
    std::string to_json() const;
    static SceneSpec from_json(std::string_view text);
};

std::string_view to_string(ToneKind kind);
std::string_view to_string(ShadingKind kind);
std::string_view to_string(SceneContent content);

/// splitmix64 step; the generator behind every synthetic draw.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;
/// Uniform double in [0, 1) from the top 53 bits.
double unit_double(std::uint64_t bits) noexcept;
/// Standard normal value determined by (seed, x, y, c) alone.
double hashed_gaussian(std::uint64_t seed, std::size_t x, std::size_t y, std::size_t c) noexcept;

/// Raw-tagged synthetic scene, each channel rescaled to [0.02, 0.98].
/// patches: a 6x6 grid of constant cells. smooth_field: a few random
/// low-frequency cosines. mixed: 24 constant rectangles over a smooth field.
ImageBuf make_scene(const SceneSpec& spec);

/// shading -> matrix -> clamp -> tone -> noise -> clamp; output tagged srgb.
ImageBuf render(const ImageBuf& raw, const IspConfig& cfg);

struct SynthPair
{
    ImageBuf raw;
    ImageBuf src;
    ImageBuf tgt;
    CorrespondenceSet corr; // with pixel positions
};

SynthPair make_pair(const SceneSpec& spec, const IspConfig& source, const IspConfig& target,
                    std::size_t stride = 4);

} // namespace kanmatch
