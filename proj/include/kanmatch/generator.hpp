// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kanmatch/image.hpp"
#include "kanmatch/kan.hpp"

namespace kanmatch
{

/// Channel-major feature tensor: data[(c * height + y) * width + x].
struct FeatureMap
{
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : height(h), width(w), channels(c), data(c * h * w, fill)
    {
    }

    std::size_t plane() const noexcept { return height * width; }
    double& at(std::size_t c, std::size_t y, std::size_t x) noexcept
    {
        return data[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const noexcept
    {
        return data[(c * height + y) * width + x];
    }
    bool finite() const noexcept;

    static FeatureMap from_image(const ImageBuf& img);
    /// Channels stacked in argument order; all inputs must share spatial dims.
    static FeatureMap concat(const std::vector<const FeatureMap*>& parts);
};

/// Toy channel widths; the defaults are the documented profile.
struct GeneratorProfile
{
    std::size_t channels = 16;     // CT width C
    std::size_t anchors = 8;       // anchor count of the colour attention
    std::size_t bias_dim = 16;     // length of the modulator bias B
    std::size_t hidden_dim = 16;   // width of X'' B_j
    std::size_t cfm_channels = 32; // width of X_m

    std::size_t cfm_inputs() const noexcept { return 3 + 3 + 2 * channels; }
    bool operator==(const GeneratorProfile&) const = default;
};

struct Tensor
{
    std::vector<std::size_t> shape;
    std::vector<float> values;

    std::size_t size() const noexcept;
    double operator[](std::size_t k) const noexcept { return values[k]; }
};

/// Named float32 tensors in a fixed manifest order.
class GeneratorWeights
{
public:
    /// Seeded uniform(-0.05, 0.05) for every weight and bias; layer-norm
    /// scales start at 1 and offsets at 0; both temperatures at sqrt(C).
    static GeneratorWeights init(std::uint64_t seed, const GeneratorProfile& profile = {});
    /// Every tensor filled with zeros (temperatures stay at sqrt(C)).
    static GeneratorWeights zeros(const GeneratorProfile& profile = {});

    /// (name, shape) pairs in storage order for a profile.
    static std::vector<std::pair<std::string, std::vector<std::size_t>>>
    manifest(const GeneratorProfile& profile);

    const GeneratorProfile& profile() const noexcept { return profile_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const Tensor& tensor(const std::string& name) const;
    Tensor& tensor(const std::string& name);
    const std::vector<std::string>& names() const noexcept { return order_; }

    /// Finite values and positive temperatures; throws ContractError.
    void validate() const;

    /// "KMGW", u32 header length, JSON header {format, version, seed,
    /// profile, tensors[{name, shape}]}, then float32 little-endian values
    /// in manifest order.
    void save(const std::filesystem::path& path) const;
    std::string serialize() const;
    /// Throws FormatError when the header disagrees with the manifest of
    /// its profile or the payload is truncated or non-finite.
    static GeneratorWeights load(const std::filesystem::path& path);
    static GeneratorWeights deserialize(const std::string& bytes);

private:
    GeneratorProfile profile_;
    std::uint64_t seed_ = 0;
    std::vector<std::string> order_;
    std::map<std::string, Tensor> tensors_;
};

/// Orthonormal Haar analysis of each channel into (LL, LH, HL, HH).
/// For a 2x2 block [[a, b], [c, d]]: LL = (a + b + c + d) / 2,
/// LH = (a + b - c - d) / 2, HL = (a - b + c - d) / 2, HH = (a - b - c + d) / 2.
std::array<FeatureMap, 4> dwt2(const FeatureMap& x);
FeatureMap idwt2(const std::array<FeatureMap, 4>& bands);

struct Illumination
{
    FeatureMap features; // F_i, C channels
    FeatureMap map;      // M_i, 3 channels
};

/// [x, mean(x)] -> 1x1 conv -> 3x3 depthwise conv (dilation 2) -> F_i ->
/// 1x1 conv -> M_i. Reflect padding keeps the spatial size.
Illumination illum_estimate(const FeatureMap& x, const GeneratorWeights& w);

/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

struct ChannelAttention
{
    Eigen::MatrixXd m_h; // C x anchors
    Eigen::MatrixXd m_v; // anchors x C
};

/// M_h = softmax(Q A^T / t_h), M_v = softmax(A K^T / t_v). Rows of Q, K and A
/// are channel vectors over the compressed spatial grid.
ChannelAttention channel_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                   const Eigen::MatrixXd& a, double t_h, double t_v);

struct McaResult
{
    FeatureMap out;
    ChannelAttention attention;
};

/// Colour attention on a C-channel map x. Q and K come from stride-2 3x3
/// convolutions, anchors from a stride-2 depthwise 3x3 conv followed by a
/// pointwise conv; Q, K and the anchors are L2-normalised per channel.
/// F_i (at twice x's resolution) passes through a stride-2 3x3 conv and gates
/// V = 1x1 conv(x); the result M_h (M_v (F_i o V)) is projected by a 1x1 conv.
McaResult mca_forward(const FeatureMap& x, const FeatureMap& f_i, const GeneratorWeights& w);

/// x + MCA(LN(x)), then + FFN(LN(.)) with FFN = 1x1 (2C), GELU, depthwise
/// 3x3, 1x1 (C).
FeatureMap ct_block(const FeatureMap& x, const FeatureMap& f_i, const GeneratorWeights& w);

/// X'' = LN(xcat); B_j, B_i are linear projections of the bias B;
/// X_m = ReLU(X'' B_j) B_i per pixel; 1x1 -> GELU -> 1x1 gives 90 channels.
/// xcat must have profile().cfm_inputs() channels (3 + 3 + 2C for the full
/// generator); the output width is 90 for every profile.
FeatureMap cfm_forward(const FeatureMap& xcat, const GeneratorWeights& w);

/// Full forward pass returning the 90-channel map at the input resolution.
FeatureMap generator_features(const ImageBuf& img, const GeneratorWeights& w);

/// generator_features() packaged as a per-pixel bilinear ParamMap; channel
/// k holds entry k of the flat KanParams order (u, v, c).
ParamMap generator_forward(const ImageBuf& img, const GeneratorWeights& w);

} // namespace kanmatch
