// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/generator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kanmatch/binary_io.hpp"
#include "kanmatch/error.hpp"
#include "kanmatch/isp.hpp"

namespace kanmatch
{

namespace
{

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr char kWeightMagic[4] = {'K', 'M', 'G', 'W'};
constexpr const char* kWeightFormat = "kanmatch-generator-weights";
constexpr int kWeightVersion = 1;
constexpr double kLayerNormEps = 1e-5;
constexpr std::size_t kMaxProfileWidth = 4096;

std::string dims(const FeatureMap& x)
{
    return std::to_string(x.channels) + "x" + std::to_string(x.height) + "x" +
           std::to_string(x.width);
}

ConstMap as_matrix(const FeatureMap& x)
{
    return ConstMap(x.data.data(), static_cast<Eigen::Index>(x.channels),
                    static_cast<Eigen::Index>(x.plane()));
}

RowMat weight_matrix(const Tensor& t, std::size_t rows, std::size_t cols)
{
    RowMat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(r, c) = t.values[r * cols + c];
    return m;
}

Eigen::VectorXd weight_vector(const Tensor& t)
{
    Eigen::VectorXd v(t.values.size());
    for (std::size_t k = 0; k < t.values.size(); ++k)
        v[k] = t.values[k];
    return v;
}

// Reflection without repeating the edge sample (PyTorch "reflect").
std::size_t reflect(long i, std::size_t n) noexcept
{
    if (n == 1)
        return 0;
    const long period = 2 * static_cast<long>(n - 1);
    i %= period;
    if (i < 0)
        i += period;
    if (i >= static_cast<long>(n))
        i = period - i;
    return static_cast<std::size_t>(i);
}

std::size_t strided(std::size_t n, std::size_t stride) noexcept
{
    return (n + stride - 1) / stride;
}

FeatureMap conv1x1(const FeatureMap& x, const GeneratorWeights& w, const std::string& name)
{
    const Tensor& wt = w.tensor(name + ".w");
    const std::size_t co = wt.shape[0];
    if (wt.shape[1] != x.channels)
        throw ContractError(name + ": expects " + std::to_string(wt.shape[1]) +
                            " input channels, got " + std::to_string(x.channels));
    FeatureMap out(co, x.height, x.width);
    MutMap(out.data.data(), co, x.plane()) =
        (weight_matrix(wt, co, x.channels) * as_matrix(x)).colwise() +
        weight_vector(w.tensor(name + ".b"));
    return out;
}

FeatureMap depthwise3x3(const FeatureMap& x, const GeneratorWeights& w, const std::string& name,
                        std::size_t dilation, std::size_t stride)
{
    const Tensor& wt = w.tensor(name + ".w");
    const Tensor& b = w.tensor(name + ".b");
    if (wt.shape[0] != x.channels)
        throw ContractError(name + ": channel mismatch for input " + dims(x));
    const std::size_t oh = strided(x.height, stride);
    const std::size_t ow = strided(x.width, stride);
    FeatureMap out(x.channels, oh, ow);
    const long d = static_cast<long>(dilation);
    for (std::size_t c = 0; c < x.channels; ++c)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
            {
                const long cy = static_cast<long>(oy * stride);
                const long cx = static_cast<long>(ox * stride);
                double acc = b[c];
                for (long ky = -1; ky <= 1; ++ky)
                    for (long kx = -1; kx <= 1; ++kx)
                        acc += wt[(c * 3 + (ky + 1)) * 3 + (kx + 1)] *
                               x.at(c, reflect(cy + ky * d, x.height), reflect(cx + kx * d, x.width));
                out.at(c, oy, ox) = acc;
            }
    return out;
}

// Dense 3x3 convolution, stride 2, reflect padding 1.
FeatureMap conv3x3_s2(const FeatureMap& x, const GeneratorWeights& w, const std::string& name)
{
    const Tensor& wt = w.tensor(name + ".w");
    const Tensor& b = w.tensor(name + ".b");
    const std::size_t co = wt.shape[0];
    const std::size_t ci = wt.shape[1];
    if (ci != x.channels)
        throw ContractError(name + ": channel mismatch for input " + dims(x));
    const std::size_t oh = strided(x.height, 2);
    const std::size_t ow = strided(x.width, 2);

    // im2col: (ci * 9) x (oh * ow)
    RowMat cols(ci * 9, oh * ow);
    for (std::size_t c = 0; c < ci; ++c)
        for (long ky = -1; ky <= 1; ++ky)
            for (long kx = -1; kx <= 1; ++kx)
            {
                const std::size_t row = (c * 3 + (ky + 1)) * 3 + (kx + 1);
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox)
                        cols(row, oy * ow + ox) =
                            x.at(c, reflect(static_cast<long>(oy * 2) + ky, x.height),
                                 reflect(static_cast<long>(ox * 2) + kx, x.width));
            }
    FeatureMap out(co, oh, ow);
    MutMap(out.data.data(), co, oh * ow) =
        (weight_matrix(wt, co, ci * 9) * cols).colwise() + weight_vector(b);
    return out;
}

FeatureMap layer_norm(const FeatureMap& x, const GeneratorWeights& w, const std::string& name)
{
    const Tensor& gamma = w.tensor(name + ".gamma");
    const Tensor& beta = w.tensor(name + ".beta");
    if (gamma.size() != x.channels)
        throw ContractError(name + ": channel mismatch for input " + dims(x));
    FeatureMap out(x.channels, x.height, x.width);
    const std::size_t n = x.plane();
    const double inv_c = 1.0 / static_cast<double>(x.channels);
    for (std::size_t p = 0; p < n; ++p)
    {
        double mean = 0.0;
        for (std::size_t c = 0; c < x.channels; ++c)
            mean += x.data[c * n + p];
        mean *= inv_c;
        double var = 0.0;
        for (std::size_t c = 0; c < x.channels; ++c)
        {
            const double d = x.data[c * n + p] - mean;
            var += d * d;
        }
        var *= inv_c;
        const double inv_sd = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t c = 0; c < x.channels; ++c)
            out.data[c * n + p] = (x.data[c * n + p] - mean) * inv_sd * gamma[c] + beta[c];
    }
    return out;
}

double gelu(double v) noexcept
{
    return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
}

void apply_gelu(FeatureMap& x) noexcept
{
    for (double& v : x.data)
        v = gelu(v);
}

void add_inplace(FeatureMap& x, const FeatureMap& y)
{
    for (std::size_t k = 0; k < x.data.size(); ++k)
        x.data[k] += y.data[k];
}

RowMat normalize_rows(RowMat m)
{
    for (Eigen::Index r = 0; r < m.rows(); ++r)
    {
        const double n = m.row(r).norm();
        m.row(r) /= std::max(n, 1e-12);
    }
    return m;
}

FeatureMap ffn(const FeatureMap& x, const GeneratorWeights& w)
{
    FeatureMap h = conv1x1(x, w, "ct.ffn.in");
    apply_gelu(h);
    h = depthwise3x3(h, w, "ct.ffn.dw", 1, 1);
    return conv1x1(h, w, "ct.ffn.out");
}

void check_profile(const GeneratorProfile& p)
{
    for (std::size_t v : {p.channels, p.anchors, p.bias_dim, p.hidden_dim, p.cfm_channels})
        if (v == 0 || v > kMaxProfileWidth)
            throw ContractError("generator profile widths must be in [1, " +
                                std::to_string(kMaxProfileWidth) + "]");
}

bool is_temperature(const std::string& name)
{
    return name == "ct.mca.t_h" || name == "ct.mca.t_v";
}

bool is_ln_scale(const std::string& name)
{
    return name.size() > 6 && name.compare(name.size() - 6, 6, ".gamma") == 0;
}

bool is_ln_offset(const std::string& name)
{
    return name.size() > 5 && name.compare(name.size() - 5, 5, ".beta") == 0;
}

} // namespace

bool FeatureMap::finite() const noexcept
{
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

FeatureMap FeatureMap::from_image(const ImageBuf& img)
{
    FeatureMap out(3, img.height(), img.width());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out.at(c, y, x) = img.at(y, x, c);
    return out;
}

FeatureMap FeatureMap::concat(const std::vector<const FeatureMap*>& parts)
{
    if (parts.empty())
        throw ContractError("FeatureMap::concat needs at least one input");
    std::size_t channels = 0;
    for (const FeatureMap* p : parts)
    {
        if (p->height != parts.front()->height || p->width != parts.front()->width)
            throw ContractError("FeatureMap::concat: spatial dims differ (" + dims(*parts.front()) +
                                " vs " + dims(*p) + ")");
        channels += p->channels;
    }
    FeatureMap out(channels, parts.front()->height, parts.front()->width);
    auto it = out.data.begin();
    for (const FeatureMap* p : parts)
        it = std::copy(p->data.begin(), p->data.end(), it);
    return out;
}

std::size_t Tensor::size() const noexcept
{
    std::size_t n = 1;
    for (std::size_t d : shape)
        n *= d;
    return n;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>>
GeneratorWeights::manifest(const GeneratorProfile& p)
{
    check_profile(p);
    const std::size_t c = p.channels;
    const std::size_t cin = p.cfm_inputs();
    std::vector<std::pair<std::string, std::vector<std::size_t>>> m;
    auto add = [&](std::string name, std::vector<std::size_t> shape) {
        m.emplace_back(std::move(name), std::move(shape));
    };
    auto conv = [&](const std::string& name, std::vector<std::size_t> shape) {
        const std::size_t co = shape.front();
        add(name + ".w", std::move(shape));
        add(name + ".b", {co});
    };
    conv("ie.in", {c, 4});
    conv("ie.dw", {c, 3, 3});
    conv("ie.out", {3, c});
    conv("embed", {c, 12});
    add("ct.ln1.gamma", {c});
    add("ct.ln1.beta", {c});
    conv("ct.mca.q", {c, c, 3, 3});
    conv("ct.mca.k", {c, c, 3, 3});
    conv("ct.mca.v", {c, c});
    conv("ct.mca.a_dw", {c, 3, 3});
    conv("ct.mca.a_pw", {p.anchors, c});
    conv("ct.mca.f", {c, c, 3, 3});
    add("ct.mca.t_h", {1});
    add("ct.mca.t_v", {1});
    conv("ct.mca.proj", {c, c});
    add("ct.ln2.gamma", {c});
    add("ct.ln2.beta", {c});
    conv("ct.ffn.in", {2 * c, c});
    conv("ct.ffn.dw", {2 * c, 3, 3});
    conv("ct.ffn.out", {c, 2 * c});
    conv("up", {4 * c, c});
    add("cfm.ln.gamma", {cin});
    add("cfm.ln.beta", {cin});
    add("cfm.bias", {p.bias_dim});
    add("cfm.proj_j", {cin * p.hidden_dim, p.bias_dim});
    add("cfm.proj_i", {p.hidden_dim * p.cfm_channels, p.bias_dim});
    conv("cfm.ffn1", {p.cfm_channels, p.cfm_channels});
    conv("cfm.ffn2", {KanParams::kCount, p.cfm_channels});
    return m;
}

GeneratorWeights GeneratorWeights::zeros(const GeneratorProfile& profile)
{
    GeneratorWeights w;
    w.profile_ = profile;
    const double t = std::sqrt(static_cast<double>(profile.channels));
    for (auto& [name, shape] : manifest(profile))
    {
        Tensor tensor;
        tensor.shape = shape;
        tensor.values.assign(tensor.size(), is_temperature(name) ? static_cast<float>(t) : 0.0f);
        w.order_.push_back(name);
        w.tensors_.emplace(name, std::move(tensor));
    }
    return w;
}

GeneratorWeights GeneratorWeights::init(std::uint64_t seed, const GeneratorProfile& profile)
{
    GeneratorWeights w = zeros(profile);
    w.seed_ = seed;
    std::uint64_t state = seed;
    for (const std::string& name : w.order_)
    {
        if (is_temperature(name))
            continue;
        Tensor& t = w.tensors_.at(name);
        if (is_ln_scale(name))
            std::fill(t.values.begin(), t.values.end(), 1.0f);
        else if (!is_ln_offset(name))
            for (float& v : t.values)
                v = static_cast<float>(-0.05 + 0.1 * unit_double(splitmix64(state)));
    }
    return w;
}

const Tensor& GeneratorWeights::tensor(const std::string& name) const
{
    const auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw ContractError("generator weights have no tensor '" + name + "'");
    return it->second;
}

Tensor& GeneratorWeights::tensor(const std::string& name)
{
    return const_cast<Tensor&>(std::as_const(*this).tensor(name));
}

void GeneratorWeights::validate() const
{
    for (const auto& [name, t] : tensors_)
        for (float v : t.values)
            if (!std::isfinite(v))
                throw ContractError("generator tensor '" + name + "' has non-finite values");
    for (const char* name : {"ct.mca.t_h", "ct.mca.t_v"})
        if (!(tensor(name).values[0] > 0.0f))
            throw ContractError(std::string("generator temperature '") + name + "' must be > 0");
}

std::string GeneratorWeights::serialize() const
{
    validate();
    nlohmann::ordered_json header;
    header["format"] = kWeightFormat;
    header["version"] = kWeightVersion;
    header["seed"] = seed_;
    header["profile"] = {{"channels", profile_.channels},
                         {"anchors", profile_.anchors},
                         {"bias_dim", profile_.bias_dim},
                         {"hidden_dim", profile_.hidden_dim},
                         {"cfm_channels", profile_.cfm_channels}};
    header["tensors"] = nlohmann::ordered_json::array();
    for (const std::string& name : order_)
        header["tensors"].push_back({{"name", name}, {"shape", tensors_.at(name).shape}});
    const std::string text = header.dump();

    std::ostringstream os(std::ios::binary);
    os.write(kWeightMagic, 4);
    detail::put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const std::string& name : order_)
        for (float v : tensors_.at(name).values)
            detail::put_f32(os, v);
    return os.str();
}

void GeneratorWeights::save(const std::filesystem::path& path) const
{
    const std::string bytes = serialize();
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os)
        throw IoError("failed writing '" + path.string() + "'");
}

GeneratorWeights GeneratorWeights::deserialize(const std::string& bytes)
{
    std::istringstream is(bytes, std::ios::binary);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kWeightMagic, 4) != 0)
        throw FormatError("not a generator weight file (bad magic)");
    const std::uint32_t header_len = detail::get_u32(is, "header length");
    if (header_len > bytes.size() - 8)
        throw FormatError("generator weight header is truncated");
    std::string text(header_len, '\0');
    is.read(text.data(), header_len);

    nlohmann::json header;
    GeneratorProfile profile;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::vector<std::size_t>>> stored;
    try
    {
        header = nlohmann::json::parse(text);
        if (header.at("format").get<std::string>() != kWeightFormat)
            throw FormatError("generator weight header has unknown format");
        const int version = header.at("version").get<int>();
        if (version != kWeightVersion)
            throw FormatError("unsupported generator weight version " + std::to_string(version));
        seed = header.at("seed").get<std::uint64_t>();
        const auto& p = header.at("profile");
        profile.channels = p.at("channels").get<std::size_t>();
        profile.anchors = p.at("anchors").get<std::size_t>();
        profile.bias_dim = p.at("bias_dim").get<std::size_t>();
        profile.hidden_dim = p.at("hidden_dim").get<std::size_t>();
        profile.cfm_channels = p.at("cfm_channels").get<std::size_t>();
        for (const auto& t : header.at("tensors"))
            stored.emplace_back(t.at("name").get<std::string>(),
                                t.at("shape").get<std::vector<std::size_t>>());
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(std::string("malformed generator weight header: ") + e.what());
    }

    std::vector<std::pair<std::string, std::vector<std::size_t>>> expected;
    try
    {
        expected = manifest(profile);
    }
    catch (const ContractError& e)
    {
        throw FormatError(std::string("generator weight header: ") + e.what());
    }
    if (stored.size() != expected.size())
        throw FormatError("generator weight manifest lists " + std::to_string(stored.size()) +
                          " tensors, expected " + std::to_string(expected.size()));
    std::size_t total = 0;
    for (std::size_t k = 0; k < expected.size(); ++k)
    {
        if (stored[k] != expected[k])
            throw FormatError("generator weight manifest entry " + std::to_string(k) + " ('" +
                              stored[k].first + "') does not match expected '" +
                              expected[k].first + "'");
        std::size_t n = 1;
        for (std::size_t d : expected[k].second)
            n *= d;
        total += n;
    }
    if (bytes.size() != 8 + header_len + 4 * total)
        throw FormatError("generator weight payload has " +
                          std::to_string(bytes.size() - 8 - header_len) + " bytes, expected " +
                          std::to_string(4 * total));

    GeneratorWeights w = zeros(profile);
    w.seed_ = seed;
    for (const std::string& name : w.order_)
        for (float& v : w.tensors_.at(name).values)
        {
            v = detail::get_f32(is, "payload");
            if (!std::isfinite(v))
                throw FormatError("generator tensor '" + name + "' has non-finite values");
        }
    try
    {
        w.validate();
    }
    catch (const ContractError& e)
    {
        throw FormatError(e.what());
    }
    return w;
}

GeneratorWeights GeneratorWeights::load(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return deserialize(ss.str());
}

std::array<FeatureMap, 4> dwt2(const FeatureMap& x)
{
    if (x.height % 2 != 0 || x.width % 2 != 0 || x.height == 0 || x.width == 0)
        throw ContractError("dwt2 needs positive even dims, got " + dims(x));
    const std::size_t h = x.height / 2;
    const std::size_t w = x.width / 2;
    std::array<FeatureMap, 4> bands;
    for (auto& b : bands)
        b = FeatureMap(x.channels, h, w);
    for (std::size_t c = 0; c < x.channels; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
            {
                const double a = x.at(c, 2 * y, 2 * xx);
                const double b = x.at(c, 2 * y, 2 * xx + 1);
                const double cc = x.at(c, 2 * y + 1, 2 * xx);
                const double d = x.at(c, 2 * y + 1, 2 * xx + 1);
                bands[0].at(c, y, xx) = 0.5 * (a + b + cc + d);
                bands[1].at(c, y, xx) = 0.5 * (a + b - cc - d);
                bands[2].at(c, y, xx) = 0.5 * (a - b + cc - d);
                bands[3].at(c, y, xx) = 0.5 * (a - b - cc + d);
            }
    return bands;
}

FeatureMap idwt2(const std::array<FeatureMap, 4>& bands)
{
    const FeatureMap& ll = bands[0];
    for (const auto& b : bands)
        if (b.channels != ll.channels || b.height != ll.height || b.width != ll.width)
            throw ContractError("idwt2: sub-band dims differ (" + dims(ll) + " vs " + dims(b) + ")");
    FeatureMap out(ll.channels, 2 * ll.height, 2 * ll.width);
    for (std::size_t c = 0; c < ll.channels; ++c)
        for (std::size_t y = 0; y < ll.height; ++y)
            for (std::size_t x = 0; x < ll.width; ++x)
            {
                const double s = bands[0].at(c, y, x);
                const double v = bands[1].at(c, y, x);
                const double hz = bands[2].at(c, y, x);
                const double d = bands[3].at(c, y, x);
                out.at(c, 2 * y, 2 * x) = 0.5 * (s + v + hz + d);
                out.at(c, 2 * y, 2 * x + 1) = 0.5 * (s + v - hz - d);
                out.at(c, 2 * y + 1, 2 * x) = 0.5 * (s - v + hz - d);
                out.at(c, 2 * y + 1, 2 * x + 1) = 0.5 * (s - v - hz + d);
            }
    return out;
}

Illumination illum_estimate(const FeatureMap& x, const GeneratorWeights& w)
{
    if (x.channels != 3)
        throw ContractError("illum_estimate expects 3 channels, got " + dims(x));
    if (x.height < 8 || x.width < 8)
        throw ContractError("illum_estimate needs dims >= 8, got " + dims(x));
    FeatureMap mean(1, x.height, x.width);
    for (std::size_t p = 0; p < x.plane(); ++p)
        mean.data[p] = (x.data[p] + x.data[x.plane() + p] + x.data[2 * x.plane() + p]) / 3.0;
    const FeatureMap in = FeatureMap::concat({&x, &mean});
    Illumination ie;
    ie.features = depthwise3x3(conv1x1(in, w, "ie.in"), w, "ie.dw", 2, 1);
    ie.map = conv1x1(ie.features, w, "ie.out");
    return ie;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits)
{
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
    {
        const double mx = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

ChannelAttention channel_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                   const Eigen::MatrixXd& a, double t_h, double t_v)
{
    if (!(t_h > 0.0 && t_v > 0.0 && std::isfinite(t_h) && std::isfinite(t_v)))
        throw ContractError("attention temperatures must be finite and > 0");
    if (q.cols() != a.cols() || k.cols() != a.cols())
        throw ContractError("channel_attention: Q, K and A need the same spatial length");
    ChannelAttention att;
    att.m_h = softmax_rows(q * a.transpose() / t_h);
    att.m_v = softmax_rows(a * k.transpose() / t_v);
    return att;
}

McaResult mca_forward(const FeatureMap& x, const FeatureMap& f_i, const GeneratorWeights& w)
{
    const double t_h = w.tensor("ct.mca.t_h")[0];
    const double t_v = w.tensor("ct.mca.t_v")[0];
    if (!(t_h > 0.0 && t_v > 0.0))
        throw ContractError("attention temperatures must be > 0");
    if (x.height < 2 || x.width < 2)
        throw ContractError("mca_forward needs dims >= 2, got " + dims(x));
    if (strided(f_i.height, 2) != x.height || strided(f_i.width, 2) != x.width)
        throw ContractError("mca_forward: F_i " + dims(f_i) + " does not compress to " + dims(x));

    const FeatureMap q = conv3x3_s2(x, w, "ct.mca.q");
    const FeatureMap k = conv3x3_s2(x, w, "ct.mca.k");
    const FeatureMap a = conv1x1(depthwise3x3(x, w, "ct.mca.a_dw", 1, 2), w, "ct.mca.a_pw");
    const FeatureMap v = conv1x1(x, w, "ct.mca.v");
    const FeatureMap f = conv3x3_s2(f_i, w, "ct.mca.f");

    McaResult res;
    res.attention = channel_attention(normalize_rows(as_matrix(q)), normalize_rows(as_matrix(k)),
                                      normalize_rows(as_matrix(a)), t_h, t_v);
    const RowMat gated = as_matrix(f).cwiseProduct(as_matrix(v));
    FeatureMap mixed(x.channels, x.height, x.width);
    MutMap(mixed.data.data(), x.channels, x.plane()) =
        res.attention.m_h * (res.attention.m_v * gated);
    res.out = conv1x1(mixed, w, "ct.mca.proj");
    return res;
}

FeatureMap ct_block(const FeatureMap& x, const FeatureMap& f_i, const GeneratorWeights& w)
{
    FeatureMap y = x;
    add_inplace(y, mca_forward(layer_norm(x, w, "ct.ln1"), f_i, w).out);
    FeatureMap z = y;
    add_inplace(z, ffn(layer_norm(y, w, "ct.ln2"), w));
    return z;
}

FeatureMap cfm_forward(const FeatureMap& xcat, const GeneratorWeights& w)
{
    const GeneratorProfile& p = w.profile();
    const std::size_t cin = xcat.channels;
    if (!xcat.finite())
        throw DomainError("cfm_forward input has non-finite values");

    if (cin != p.cfm_inputs())
        throw ContractError("cfm_forward expects " + std::to_string(p.cfm_inputs()) +
                            " channels for this profile, got " + dims(xcat));
    const FeatureMap xn = layer_norm(xcat, w, "cfm.ln");

    const Eigen::VectorXd bias = weight_vector(w.tensor("cfm.bias"));
    const Tensor& pj = w.tensor("cfm.proj_j");
    const Tensor& pi = w.tensor("cfm.proj_i");
    Eigen::VectorXd bj_flat = weight_matrix(pj, pj.shape[0], pj.shape[1]) * bias;
    Eigen::VectorXd bi_flat = weight_matrix(pi, pi.shape[0], pi.shape[1]) * bias;
    const MutMap bj(bj_flat.data(), cin, p.hidden_dim);
    const MutMap bi(bi_flat.data(), p.hidden_dim, p.cfm_channels);

    // Pixels as rows: (HW x Cin) (Cin x Dh) -> ReLU -> (Dh x Cm).
    const RowMat hidden = (as_matrix(xn).transpose() * bj).cwiseMax(0.0);
    FeatureMap xm(p.cfm_channels, xcat.height, xcat.width);
    MutMap(xm.data.data(), p.cfm_channels, xcat.plane()) = (hidden * bi).transpose();

    FeatureMap h = conv1x1(xm, w, "cfm.ffn1");
    apply_gelu(h);
    return conv1x1(h, w, "cfm.ffn2");
}

FeatureMap generator_features(const ImageBuf& img, const GeneratorWeights& w)
{
    if (img.height() < 16 || img.width() < 16 || img.height() % 2 || img.width() % 2)
        throw ContractError("generator input must be even and at least 16x16, got " +
                            std::to_string(img.height()) + "x" + std::to_string(img.width()));
    img.check_finite();
    w.validate();

    const FeatureMap x = FeatureMap::from_image(img);
    const Illumination ie = illum_estimate(x, w);

    FeatureMap lit = x;
    for (std::size_t k = 0; k < lit.data.size(); ++k)
        lit.data[k] += x.data[k] * ie.map.data[k];

    const auto bands = dwt2(lit);
    const FeatureMap embedded =
        conv1x1(FeatureMap::concat({&bands[0], &bands[1], &bands[2], &bands[3]}), w, "embed");
    const FeatureMap ct = ct_block(embedded, ie.features, w);

    // 4C channels at half resolution become four C-channel sub-bands.
    const FeatureMap packed = conv1x1(ct, w, "up");
    const std::size_t c = w.profile().channels;
    std::array<FeatureMap, 4> up_bands;
    for (std::size_t b = 0; b < 4; ++b)
    {
        up_bands[b] = FeatureMap(c, ct.height, ct.width);
        std::copy_n(packed.data.begin() + static_cast<std::ptrdiff_t>(b * c * ct.plane()),
                    c * ct.plane(), up_bands[b].data.begin());
    }
    const FeatureMap up = idwt2(up_bands);

    const FeatureMap out = cfm_forward(FeatureMap::concat({&x, &ie.map, &ie.features, &up}), w);
    if (!out.finite())
        throw DomainError("generator produced non-finite parameters");
    return out;
}

ParamMap generator_forward(const ImageBuf& img, const GeneratorWeights& w)
{
    const FeatureMap f = generator_features(img, w);
    ParamMap map;
    map.height_t = f.height;
    map.width_t = f.width;
    map.source_h = f.height;
    map.source_w = f.width;
    map.interp = Interp::bilinear;
    map.params.resize(f.plane());
    std::array<double, KanParams::kCount> flat{};
    for (std::size_t p = 0; p < f.plane(); ++p)
    {
        for (std::size_t k = 0; k < KanParams::kCount; ++k)
            flat[k] = f.data[k * f.plane() + p];
        map.params[p] = KanParams::from_flat(flat);
    }
    map.validate();
    return map;
}

} // namespace kanmatch
