// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kanmatch/correspondence.hpp"
#include "kanmatch/image.hpp"

namespace kanmatch
{

/// Row-vector convention: out_j = sum_i in_i * m[i][j].
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity_mat3() noexcept;

struct LinearModel
{
    Mat3 m = identity_mat3();
};

/// Monomials r^a g^b b^c with 1 <= a+b+c <= degree, plus a constant term when
/// include_bias is set. coeffs[j * terms + t] maps term t to output j.
struct PolyModel
{
    int degree = 3;
    bool include_bias = false;
    std::vector<double> coeffs;

    std::size_t term_count() const;
};

/// Root-polynomial terms: each monomial of total degree d taken to the power
/// 1/d, keeping one term per distinct feature (13 terms at degree 3).
struct RootPolyModel
{
    int degree = 3;
    std::vector<double> coeffs;

    std::size_t term_count() const;
};

/// out = (in^gamma_in * m)^(1/gamma_out), channel-wise powers.
struct GammaMatModel
{
    std::array<double, 3> gamma_in{1.0, 1.0, 1.0};
    Mat3 m = identity_mat3();
    std::array<double, 3> gamma_out{1.0, 1.0, 1.0};
};

inline constexpr double kGammaMin = 0.2;
inline constexpr double kGammaMax = 5.0;

using BaselineModel = std::variant<LinearModel, PolyModel, RootPolyModel, GammaMatModel>;

enum class BaselineKind
{
    linear,
    poly,
    rootpoly,
    gammamat
};

std::string_view to_string(BaselineKind kind);
BaselineKind baseline_kind_from_string(std::string_view name);
BaselineKind kind_of(const BaselineModel& model) noexcept;

/// Exponent triples (a, b, c) of the polynomial expansion, in feature order.
std::vector<std::array<int, 3>> poly_exponents(int degree, bool include_bias);
/// Exponent triples of the root-polynomial expansion; each feature is
/// (r^a g^b b^c)^(1/(a+b+c)).
std::vector<std::array<int, 3>> rootpoly_exponents(int degree);

LinearModel fit_linear(const CorrespondenceSet& corr);
PolyModel fit_poly(const CorrespondenceSet& corr, int degree = 3, bool include_bias = false);
RootPolyModel fit_rootpoly(const CorrespondenceSet& corr, int degree = 3);
/// Alternates a least-squares matrix solve with log-grid line searches over
/// each gamma in [0.2, 5]. Samples with any component below 1e-4 are left out.
GammaMatModel fit_gamma_matrix(const CorrespondenceSet& corr);

/// Fits the default configuration of `kind`.
BaselineModel fit_baseline(BaselineKind kind, const CorrespondenceSet& corr);

/// Unclamped evaluation.
Rgb predict(const LinearModel& model, const Rgb& x);
Rgb predict(const PolyModel& model, const Rgb& x);
Rgb predict(const RootPolyModel& model, const Rgb& x);
Rgb predict(const GammaMatModel& model, const Rgb& x);
Rgb predict(const BaselineModel& model, const Rgb& x);

/// Per-pixel predict() clamped to [0,1]; keeps the input colorspace tag.
ImageBuf apply_baseline(const BaselineModel& model, const ImageBuf& img);

std::size_t parameter_count(const BaselineModel& model);

std::string baseline_to_json(const BaselineModel& model);
BaselineModel baseline_from_json(std::string_view text);
void save_baseline(const std::filesystem::path& path, const BaselineModel& model);
BaselineModel load_baseline(const std::filesystem::path& path);

} // namespace kanmatch
