// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>
#include <json.hpp>

#include "kanmatch/error.hpp"

namespace kanmatch
{

namespace
{

constexpr double kAutoRidge = 1e-8;
constexpr double kGammaFloor = 1e-4;
constexpr int kMaxDegree = 8;
constexpr int kGammaRounds = 3;
constexpr int kGammaMaxEvaluations = 1500;
constexpr double kGammaTolerance = 1e-6;
constexpr int kGammaGrid = 49;
constexpr int kGammaRefinements = 3;
constexpr int kGammaRefineGrid = 11;

using FeatureFn = std::function<void(const Rgb&, double*)>;

void check_degree(int degree)
{
    if (degree < 1 || degree > kMaxDegree)
        throw ContractError("polynomial degree must be in [1, " + std::to_string(kMaxDegree) +
                            "], got " + std::to_string(degree));
}

std::vector<std::size_t> sorted_order(const CorrespondenceSet& corr)
{
    std::vector<std::size_t> order(corr.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = corr.samples[a];
        const auto& y = corr.samples[b];
        if (x.src != y.src)
            return x.src < y.src;
        if (x.tgt != y.tgt)
            return x.tgt < y.tgt;
        return corr.weight(a) < corr.weight(b);
    });
    return order;
}

// Per-channel least squares: rows sqrt(w) * features, targets sqrt(w) * t.
// Returns an n x 3 coefficient matrix.
Eigen::MatrixXd solve_features(const std::vector<std::size_t>& order, const CorrespondenceSet& corr,
                               std::size_t n, const FeatureFn& features,
                               const std::function<Rgb(const Rgb&)>& target)
{
    const auto rows = static_cast<Eigen::Index>(order.size());
    const auto cols = static_cast<Eigen::Index>(n);
    const bool ridge = order.size() < n;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows + (ridge ? cols : 0), cols);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(a.rows(), 3);
    std::vector<double> f(n);
    for (Eigen::Index r = 0; r < rows; ++r)
    {
        const std::size_t k = order[static_cast<std::size_t>(r)];
        const double s = std::sqrt(corr.weight(k));
        features(corr.samples[k].src, f.data());
        for (Eigen::Index c = 0; c < cols; ++c)
            a(r, c) = s * f[static_cast<std::size_t>(c)];
        const Rgb t = target(corr.samples[k].tgt);
        for (Eigen::Index j = 0; j < 3; ++j)
            b(r, j) = s * t[static_cast<std::size_t>(j)];
    }
    if (ridge)
        for (Eigen::Index c = 0; c < cols; ++c)
            a(rows + c, c) = std::sqrt(kAutoRidge);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-12);
    cod.compute(a);
    Eigen::MatrixXd w = cod.solve(b);
    if (!w.allFinite())
        throw SolverError("baseline least-squares solution is not finite");
    return w;
}

std::vector<double> to_coeffs(const Eigen::MatrixXd& w)
{
    // Output-major: coeffs[j * terms + t].
    std::vector<double> out(static_cast<std::size_t>(w.size()));
    for (Eigen::Index j = 0; j < 3; ++j)
        for (Eigen::Index t = 0; t < w.rows(); ++t)
            out[static_cast<std::size_t>(j * w.rows() + t)] = w(t, j);
    return out;
}

double monomial(const Rgb& x, const std::array<int, 3>& e) noexcept
{
    double v = 1.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (int p = 0; p < e[i]; ++p)
            v *= x[i];
    return v;
}

double root_term(const Rgb& x, const std::array<int, 3>& e) noexcept
{
    const int d = e[0] + e[1] + e[2];
    if (d == 1)
        return monomial(x, e);
    const double v = monomial(x, e);
    if (!(v > 0.0))
        return 0.0;
    return d == 2 ? std::sqrt(v) : (d == 3 ? std::cbrt(v) : std::pow(v, 1.0 / d));
}

Rgb combine(const std::vector<double>& coeffs, const std::vector<double>& f)
{
    const std::size_t n = f.size();
    if (coeffs.size() != 3 * n)
        throw ContractError("model holds " + std::to_string(coeffs.size()) +
                            " coefficients, expected " + std::to_string(3 * n));
    Rgb y{};
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t t = 0; t < n; ++t)
            y[j] += coeffs[j * n + t] * f[t];
    return y;
}

double safe_pow(double v, double e) noexcept
{
    return v > 0.0 ? std::pow(v, e) : 0.0;
}

struct GammaData
{
    std::vector<Rgb> src;
    std::vector<Rgb> tgt;
    std::vector<double> w;
    double mass = 0.0;
};

double gamma_loss(const GammaMatModel& m, const GammaData& d)
{
    double total = 0.0;
    for (std::size_t n = 0; n < d.src.size(); ++n)
    {
        const Rgb y = predict(m, d.src[n]);
        double e = 0.0;
        for (std::size_t j = 0; j < 3; ++j)
            e += (y[j] - d.tgt[n][j]) * (y[j] - d.tgt[n][j]);
        total += d.w[n] * e;
    }
    return total / (3.0 * d.mass);
}

Mat3 solve_gamma_matrix(const GammaMatModel& m, const GammaData& d)
{
    const auto rows = static_cast<Eigen::Index>(d.src.size());
    Eigen::MatrixXd a(rows, 3);
    Eigen::MatrixXd b(rows, 3);
    for (Eigen::Index r = 0; r < rows; ++r)
    {
        const auto n = static_cast<std::size_t>(r);
        const double s = std::sqrt(d.w[n]);
        for (Eigen::Index i = 0; i < 3; ++i)
        {
            const auto c = static_cast<std::size_t>(i);
            a(r, i) = s * std::pow(d.src[n][c], m.gamma_in[c]);
            b(r, i) = s * std::pow(d.tgt[n][c], m.gamma_out[c]);
        }
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-12);
    cod.compute(a);
    const Eigen::MatrixXd w = cod.solve(b);
    if (!w.allFinite())
        throw SolverError("gamma-matrix least-squares solution is not finite");
    Mat3 out{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            out[i][j] = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
}

// Grid search on log(gamma), then repeated finer grids around the best point.
// loss_at(g) is the full model loss with this gamma set to g.
template <class LossAt>
void search_gamma(double& gamma, LossAt&& loss_at)
{
    const double lo = std::log(kGammaMin);
    const double hi = std::log(kGammaMax);
    double best_g = gamma;
    double best_l = loss_at(gamma);
    auto probe = [&](double lg) {
        const double g = std::exp(std::clamp(lg, lo, hi));
        const double l = loss_at(g);
        if (l < best_l)
        {
            best_l = l;
            best_g = g;
        }
    };
    double step = (hi - lo) / (kGammaGrid - 1);
    for (int k = 0; k < kGammaGrid; ++k)
        probe(lo + step * k);
    for (int pass = 0; pass < kGammaRefinements; ++pass)
    {
        const double centre = std::log(best_g);
        const double span = step;
        step = 2.0 * span / (kGammaRefineGrid - 1);
        for (int k = 0; k < kGammaRefineGrid; ++k)
            probe(centre - span + step * k);
    }
    gamma = best_g;
}

// Searches one input gamma; the other two linearised channels are cached.
void search_gamma_in(GammaMatModel& m, std::size_t c, const GammaData& d)
{
    const std::size_t n = d.src.size();
    std::vector<Rgb> lin(n);
    std::vector<double> log_src(n);
    for (std::size_t k = 0; k < n; ++k)
    {
        for (std::size_t i = 0; i < 3; ++i)
            lin[k][i] = safe_pow(d.src[k][i], m.gamma_in[i]);
        log_src[k] = std::log(d.src[k][c]); // inputs are above kGammaFloor
    }
    search_gamma(m.gamma_in[c], [&](double g) {
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            Rgb x = lin[k];
            x[c] = std::exp(g * log_src[k]);
            double e = 0.0;
            for (std::size_t j = 0; j < 3; ++j)
            {
                const double v = x[0] * m.m[0][j] + x[1] * m.m[1][j] + x[2] * m.m[2][j];
                const double r = safe_pow(v, 1.0 / m.gamma_out[j]) - d.tgt[k][j];
                e += r * r;
            }
            total += d.w[k] * e;
        }
        return total / (3.0 * d.mass);
    });
}

// Searches one output gamma; only that output channel's error changes.
void search_gamma_out(GammaMatModel& m, std::size_t j, const GammaData& d)
{
    const std::size_t n = d.src.size();
    std::vector<double> log_v(n);
    std::vector<char> positive(n);
    double others = 0.0;
    for (std::size_t k = 0; k < n; ++k)
    {
        Rgb x;
        for (std::size_t i = 0; i < 3; ++i)
            x[i] = safe_pow(d.src[k][i], m.gamma_in[i]);
        for (std::size_t o = 0; o < 3; ++o)
        {
            const double v = x[0] * m.m[0][o] + x[1] * m.m[1][o] + x[2] * m.m[2][o];
            if (o == j)
            {
                positive[k] = v > 0.0;
                log_v[k] = v > 0.0 ? std::log(v) : 0.0;
            }
            else
            {
                const double r = safe_pow(v, 1.0 / m.gamma_out[o]) - d.tgt[k][o];
                others += d.w[k] * r * r;
            }
        }
    }
    search_gamma(m.gamma_out[j], [&](double g) {
        const double inv = 1.0 / g;
        double total = others;
        for (std::size_t k = 0; k < n; ++k)
        {
            const double y = positive[k] ? std::exp(inv * log_v[k]) : 0.0;
            const double r = y - d.tgt[k][j];
            total += d.w[k] * r * r;
        }
        return total / (3.0 * d.mass);
    });
}

// Joint Levenberg-Marquardt refinement of (log gamma_in, log gamma_out, m)
// from the grid-search estimate, in the output domain.
struct GammaResidual
{
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum
    {
        InputsAtCompileTime = Eigen::Dynamic,
        ValuesAtCompileTime = Eigen::Dynamic
    };

    const GammaData* d;

    int inputs() const { return 15; }
    int values() const { return static_cast<int>(3 * d->src.size()); }

    static GammaMatModel unpack(const Eigen::VectorXd& x)
    {
        GammaMatModel m;
        for (std::size_t c = 0; c < 3; ++c)
        {
            m.gamma_in[c] = std::exp(x[static_cast<Eigen::Index>(c)]);
            m.gamma_out[c] = std::exp(x[static_cast<Eigen::Index>(3 + c)]);
        }
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                m.m[i][j] = x[static_cast<Eigen::Index>(6 + 3 * i + j)];
        return m;
    }

    static Eigen::VectorXd pack(const GammaMatModel& m)
    {
        Eigen::VectorXd x(15);
        for (std::size_t c = 0; c < 3; ++c)
        {
            x[static_cast<Eigen::Index>(c)] = std::log(m.gamma_in[c]);
            x[static_cast<Eigen::Index>(3 + c)] = std::log(m.gamma_out[c]);
        }
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                x[static_cast<Eigen::Index>(6 + 3 * i + j)] = m.m[i][j];
        return x;
    }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const
    {
        const GammaMatModel m = unpack(x);
        for (std::size_t n = 0; n < d->src.size(); ++n)
        {
            const Rgb y = predict(m, d->src[n]);
            const double s = std::sqrt(d->w[n]);
            for (std::size_t j = 0; j < 3; ++j)
                r[static_cast<Eigen::Index>(3 * n + j)] = s * (y[j] - d->tgt[n][j]);
        }
        return 0;
    }
};

GammaMatModel polish_gamma_matrix(const GammaMatModel& start, const GammaData& d)
{
    Eigen::NumericalDiff<GammaResidual> functor(GammaResidual{&d});
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<GammaResidual>> lm(functor);
    lm.parameters.maxfev = kGammaMaxEvaluations;
    Eigen::VectorXd x = GammaResidual::pack(start);
    lm.minimize(x);
    if (!x.allFinite())
        return start;
    GammaMatModel m = GammaResidual::unpack(x);
    for (auto* g : {&m.gamma_in, &m.gamma_out})
        for (double& v : *g)
            v = std::clamp(v, kGammaMin, kGammaMax);
    return m;
}

nlohmann::json mat_json(const Mat3& m)
{
    // Output-major, matching the linear model's coefficient order.
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < 3; ++i)
            out.push_back(m[i][j]);
    return out;
}

std::vector<double> number_list(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || !j[key].is_array())
        throw FormatError(std::string("baseline model is missing array '") + key + "'");
    std::vector<double> out;
    for (const auto& v : j[key])
    {
        if (!v.is_number())
            throw FormatError(std::string("baseline model field '") + key +
                              "' holds a non-number");
        out.push_back(v.get<double>());
        if (!std::isfinite(out.back()))
            throw FormatError(std::string("baseline model field '") + key +
                              "' holds a non-finite value");
    }
    return out;
}

} // namespace

Mat3 identity_mat3() noexcept
{
    return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

std::size_t PolyModel::term_count() const
{
    return poly_exponents(degree, include_bias).size();
}

std::size_t RootPolyModel::term_count() const
{
    return rootpoly_exponents(degree).size();
}

std::string_view to_string(BaselineKind kind)
{
    switch (kind)
    {
    case BaselineKind::linear:
        return "linear";
    case BaselineKind::poly:
        return "poly";
    case BaselineKind::rootpoly:
        return "rootpoly";
    case BaselineKind::gammamat:
        return "gammamat";
    }
    return "linear";
}

BaselineKind baseline_kind_from_string(std::string_view name)
{
    for (auto k : {BaselineKind::linear, BaselineKind::poly, BaselineKind::rootpoly,
                   BaselineKind::gammamat})
        if (to_string(k) == name)
            return k;
    throw ContractError("unknown baseline method '" + std::string(name) + "'");
}

BaselineKind kind_of(const BaselineModel& model) noexcept
{
    return static_cast<BaselineKind>(model.index());
}

std::vector<std::array<int, 3>> poly_exponents(int degree, bool include_bias)
{
    check_degree(degree);
    std::vector<std::array<int, 3>> out;
    if (include_bias)
        out.push_back({0, 0, 0});
    for (int d = 1; d <= degree; ++d)
        for (int a = d; a >= 0; --a)
            for (int b = d - a; b >= 0; --b)
                out.push_back({a, b, d - a - b});
    return out;
}

std::vector<std::array<int, 3>> rootpoly_exponents(int degree)
{
    check_degree(degree);
    std::vector<std::array<int, 3>> out;
    // A monomial whose exponents share a factor repeats a lower-degree feature.
    for (int d = 1; d <= degree; ++d)
        for (int a = d; a >= 0; --a)
            for (int b = d - a; b >= 0; --b)
            {
                const int c = d - a - b;
                if (std::gcd(std::gcd(a, b), c) == 1)
                    out.push_back({a, b, c});
            }
    return out;
}

LinearModel fit_linear(const CorrespondenceSet& corr)
{
    corr.validate();
    const auto w = solve_features(
        sorted_order(corr), corr, 3, [](const Rgb& x, double* f) { std::copy(x.begin(), x.end(), f); },
        [](const Rgb& t) { return t; });
    LinearModel m;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            m.m[i][j] = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return m;
}

PolyModel fit_poly(const CorrespondenceSet& corr, int degree, bool include_bias)
{
    corr.validate();
    const auto exps = poly_exponents(degree, include_bias);
    const auto w = solve_features(
        sorted_order(corr), corr, exps.size(),
        [&](const Rgb& x, double* f) {
            for (std::size_t t = 0; t < exps.size(); ++t)
                f[t] = monomial(x, exps[t]);
        },
        [](const Rgb& t) { return t; });
    PolyModel m;
    m.degree = degree;
    m.include_bias = include_bias;
    m.coeffs = to_coeffs(w);
    return m;
}

RootPolyModel fit_rootpoly(const CorrespondenceSet& corr, int degree)
{
    corr.validate();
    const auto exps = rootpoly_exponents(degree);
    const auto w = solve_features(
        sorted_order(corr), corr, exps.size(),
        [&](const Rgb& x, double* f) {
            for (std::size_t t = 0; t < exps.size(); ++t)
                f[t] = root_term(x, exps[t]);
        },
        [](const Rgb& t) { return t; });
    RootPolyModel m;
    m.degree = degree;
    m.coeffs = to_coeffs(w);
    return m;
}

GammaMatModel fit_gamma_matrix(const CorrespondenceSet& corr)
{
    corr.validate();
    GammaData d;
    for (std::size_t k : sorted_order(corr))
    {
        const auto& s = corr.samples[k];
        const auto low = [](const Rgb& v) {
            return std::any_of(v.begin(), v.end(), [](double c) { return c < kGammaFloor; });
        };
        if (low(s.src) || low(s.tgt) || corr.weight(k) == 0.0)
            continue;
        d.src.push_back(s.src);
        d.tgt.push_back(s.tgt);
        d.w.push_back(corr.weight(k));
        d.mass += corr.weight(k);
    }
    if (d.src.empty())
        throw SolverError("no correspondence has all components above 1e-4; cannot estimate gammas");

    GammaMatModel m;
    m.m = solve_gamma_matrix(m, d);
    GammaMatModel best = m;
    double best_loss = gamma_loss(m, d);
    double previous = best_loss;
    for (int round = 0; round < kGammaRounds; ++round)
    {
        for (std::size_t c = 0; c < 3; ++c)
            search_gamma_in(m, c, d);
        for (std::size_t c = 0; c < 3; ++c)
            search_gamma_out(m, c, d);
        double loss = gamma_loss(m, d);
        if (loss < best_loss)
        {
            best_loss = loss;
            best = m;
        }
        GammaMatModel refit = m;
        refit.m = solve_gamma_matrix(m, d);
        const double refit_loss = gamma_loss(refit, d);
        if (refit_loss < loss)
        {
            m = refit;
            loss = refit_loss;
        }
        if (loss < best_loss)
        {
            best_loss = loss;
            best = m;
        }
        const double change = std::abs(previous - loss) / std::max(previous, 1e-300);
        previous = loss;
        if (change < kGammaTolerance)
            break;
    }

    const GammaMatModel polished = polish_gamma_matrix(best, d);
    if (gamma_loss(polished, d) < best_loss)
        best = polished;
    return best;
}

BaselineModel fit_baseline(BaselineKind kind, const CorrespondenceSet& corr)
{
    switch (kind)
    {
    case BaselineKind::linear:
        return fit_linear(corr);
    case BaselineKind::poly:
        return fit_poly(corr);
    case BaselineKind::rootpoly:
        return fit_rootpoly(corr);
    case BaselineKind::gammamat:
        return fit_gamma_matrix(corr);
    }
    throw ContractError("unknown baseline method");
}

Rgb predict(const LinearModel& model, const Rgb& x)
{
    Rgb y{};
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < 3; ++i)
            y[j] += x[i] * model.m[i][j];
    return y;
}

Rgb predict(const PolyModel& model, const Rgb& x)
{
    const auto exps = poly_exponents(model.degree, model.include_bias);
    std::vector<double> f(exps.size());
    for (std::size_t t = 0; t < exps.size(); ++t)
        f[t] = monomial(x, exps[t]);
    return combine(model.coeffs, f);
}

Rgb predict(const RootPolyModel& model, const Rgb& x)
{
    const auto exps = rootpoly_exponents(model.degree);
    std::vector<double> f(exps.size());
    for (std::size_t t = 0; t < exps.size(); ++t)
        f[t] = root_term(x, exps[t]);
    return combine(model.coeffs, f);
}

Rgb predict(const GammaMatModel& model, const Rgb& x)
{
    Rgb lin{};
    for (std::size_t i = 0; i < 3; ++i)
        lin[i] = safe_pow(x[i], model.gamma_in[i]);
    Rgb y{};
    for (std::size_t j = 0; j < 3; ++j)
    {
        double v = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            v += lin[i] * model.m[i][j];
        y[j] = safe_pow(v, 1.0 / model.gamma_out[j]);
    }
    return y;
}

Rgb predict(const BaselineModel& model, const Rgb& x)
{
    return std::visit([&](const auto& m) { return predict(m, x); }, model);
}

ImageBuf apply_baseline(const BaselineModel& model, const ImageBuf& img)
{
    ImageBuf out(img.height(), img.width(), img.colorspace());
    // Expansion tables are built once per image rather than per pixel.
    std::vector<std::array<int, 3>> exps;
    if (const auto* p = std::get_if<PolyModel>(&model))
        exps = poly_exponents(p->degree, p->include_bias);
    else if (const auto* r = std::get_if<RootPolyModel>(&model))
        exps = rootpoly_exponents(r->degree);
    std::vector<double> f(exps.size());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
        {
            const Rgb in = img.pixel(y, x);
            Rgb v;
            if (const auto* p = std::get_if<PolyModel>(&model))
            {
                for (std::size_t t = 0; t < exps.size(); ++t)
                    f[t] = monomial(in, exps[t]);
                v = combine(p->coeffs, f);
            }
            else if (const auto* r = std::get_if<RootPolyModel>(&model))
            {
                for (std::size_t t = 0; t < exps.size(); ++t)
                    f[t] = root_term(in, exps[t]);
                v = combine(r->coeffs, f);
            }
            else
            {
                v = predict(model, in);
            }
            out.set_pixel(y, x, v);
        }
    return out;
}

std::size_t parameter_count(const BaselineModel& model)
{
    switch (kind_of(model))
    {
    case BaselineKind::linear:
        return 9;
    case BaselineKind::poly:
        return 3 * std::get<PolyModel>(model).term_count();
    case BaselineKind::rootpoly:
        return 3 * std::get<RootPolyModel>(model).term_count();
    case BaselineKind::gammamat:
        return 15;
    }
    return 0;
}

std::string baseline_to_json(const BaselineModel& model)
{
    nlohmann::ordered_json j;
    j["type"] = std::string(to_string(kind_of(model)));
    if (const auto* l = std::get_if<LinearModel>(&model))
    {
        j["degree"] = 1;
        std::vector<double> c;
        for (std::size_t jj = 0; jj < 3; ++jj)
            for (std::size_t i = 0; i < 3; ++i)
                c.push_back(l->m[i][jj]);
        j["coeffs"] = c;
    }
    else if (const auto* p = std::get_if<PolyModel>(&model))
    {
        j["degree"] = p->degree;
        j["include_bias"] = p->include_bias;
        j["coeffs"] = p->coeffs;
    }
    else if (const auto* r = std::get_if<RootPolyModel>(&model))
    {
        j["degree"] = r->degree;
        j["coeffs"] = r->coeffs;
    }
    else
    {
        const auto& g = std::get<GammaMatModel>(model);
        j["degree"] = 1;
        std::vector<double> c(g.gamma_in.begin(), g.gamma_in.end());
        for (double v : mat_json(g.m))
            c.push_back(v);
        c.insert(c.end(), g.gamma_out.begin(), g.gamma_out.end());
        j["coeffs"] = c;
    }
    return j.dump(2) + "\n";
}

BaselineModel baseline_from_json(std::string_view text)
{
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw FormatError(std::string("baseline model is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw FormatError("baseline model is missing string field 'type'");
    BaselineKind kind;
    try
    {
        kind = baseline_kind_from_string(j["type"].get<std::string>());
    }
    catch (const ContractError& e)
    {
        throw FormatError(e.what());
    }
    const int degree = j.contains("degree") && j["degree"].is_number_integer()
                           ? j["degree"].get<int>()
                           : throw FormatError("baseline model is missing integer 'degree'");
    const auto c = number_list(j, "coeffs");
    auto expect = [&](std::size_t n) {
        if (c.size() != n)
            throw FormatError("baseline model of type '" + std::string(to_string(kind)) +
                              "' needs " + std::to_string(n) + " coefficients, got " +
                              std::to_string(c.size()));
    };
    auto checked_degree = [&] {
        if (degree < 1 || degree > kMaxDegree)
            throw FormatError("baseline model degree " + std::to_string(degree) +
                              " is out of range");
        return degree;
    };
    switch (kind)
    {
    case BaselineKind::linear:
    {
        expect(9);
        LinearModel m;
        for (std::size_t jj = 0; jj < 3; ++jj)
            for (std::size_t i = 0; i < 3; ++i)
                m.m[i][jj] = c[jj * 3 + i];
        return m;
    }
    case BaselineKind::poly:
    {
        PolyModel m;
        m.degree = checked_degree();
        if (j.contains("include_bias"))
        {
            if (!j["include_bias"].is_boolean())
                throw FormatError("baseline model field 'include_bias' must be a boolean");
            m.include_bias = j["include_bias"].get<bool>();
        }
        expect(3 * m.term_count());
        m.coeffs = c;
        return m;
    }
    case BaselineKind::rootpoly:
    {
        RootPolyModel m;
        m.degree = checked_degree();
        expect(3 * m.term_count());
        m.coeffs = c;
        return m;
    }
    case BaselineKind::gammamat:
    {
        expect(15);
        GammaMatModel m;
        for (std::size_t i = 0; i < 3; ++i)
        {
            m.gamma_in[i] = c[i];
            m.gamma_out[i] = c[12 + i];
            for (std::size_t jj = 0; jj < 3; ++jj)
                m.m[i][jj] = c[3 + jj * 3 + i];
        }
        for (std::size_t i = 0; i < 3; ++i)
            if (!(m.gamma_in[i] > 0.0) || !(m.gamma_out[i] > 0.0))
                throw FormatError("gamma-matrix model gammas must be positive");
        return m;
    }
    }
    throw FormatError("unknown baseline model type");
}

void save_baseline(const std::filesystem::path& path, const BaselineModel& model)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path.string() + "' for writing");
    os << baseline_to_json(model);
    if (!os)
        throw IoError("failed writing '" + path.string() + "'");
}

BaselineModel load_baseline(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return baseline_from_json(ss.str());
}

} // namespace kanmatch
