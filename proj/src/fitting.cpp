// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "kanmatch/detail/kan_features.hpp"
#include "kanmatch/error.hpp"

namespace kanmatch
{

namespace
{

constexpr Eigen::Index kFeatures = 3 + 3 * static_cast<Eigen::Index>(kBasisCount); // 27
constexpr Eigen::Index kSplineFeatures = kFeatures - 3;
constexpr std::size_t kMinTilePixels = 10;
constexpr double kRankThreshold = 1e-10;

using Weights = Eigen::Matrix<double, kFeatures, 3>;

void feature_row(const Rgb& rgb, double scale, Eigen::MatrixXd& a, Eigen::Index r)
{
    auto row = a.row(r);
    const detail::KanFeatures f = detail::kan_features(rgb);
    for (Eigen::Index i = 0; i < 3; ++i)
        row(i) = scale * f.s[i];
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t m = 0; m < kBasisCount; ++m)
            row(3 + static_cast<Eigen::Index>(i * kBasisCount + m)) = scale * f.b[i][m];
}

KanParams to_params(const Weights& w)
{
    CollapsedParams cp;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
        {
            const auto ji = static_cast<Eigen::Index>(j);
            cp.a[KanParams::pair(i, j)] = w(static_cast<Eigen::Index>(i), ji);
            for (std::size_t m = 0; m < kBasisCount; ++m)
                cp.w[KanParams::coeff(i, j, m)] =
                    w(3 + static_cast<Eigen::Index>(i * kBasisCount + m), ji);
        }
    return expand(cp);
}

Weights from_params(const KanParams& p)
{
    const CollapsedParams cp = collapse(p);
    Weights w;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
        {
            const auto ji = static_cast<Eigen::Index>(j);
            w(static_cast<Eigen::Index>(i), ji) = cp.a[KanParams::pair(i, j)];
            for (std::size_t m = 0; m < kBasisCount; ++m)
                w(3 + static_cast<Eigen::Index>(i * kBasisCount + m), ji) =
                    cp.w[KanParams::coeff(i, j, m)];
        }
    return w;
}

/// Minimum-norm least squares of a stacked system. With require_full_rank the
/// system must determine every weight.
Weights solve_stacked(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool require_full_rank)
{
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(kRankThreshold);
    cod.compute(a);
    if (require_full_rank && cod.rank() < kFeatures)
        throw SolverError("singular normal matrix (rank " + std::to_string(cod.rank()) +
                          " of 27); use ridge_lambda > 0");
    Weights w = cod.solve(b);
    if (!w.allFinite())
        throw SolverError("least-squares solution is not finite");
    return w;
}

void append_ridge(Eigen::MatrixXd& a, Eigen::MatrixXd& b, Eigen::Index at, double lambda)
{
    const double s = std::sqrt(lambda);
    a.block(at, 0, kSplineFeatures, kFeatures).setZero();
    b.block(at, 0, kSplineFeatures, 3).setZero();
    for (Eigen::Index r = 0; r < kSplineFeatures; ++r)
        a(at + r, 3 + r) = s;
}

void check_lambda(double lambda, const char* name)
{
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw ContractError(std::string(name) + " must be a finite value >= 0");
}

bool sample_less(const CorrespondenceSet& corr, std::size_t a, std::size_t b)
{
    const auto& x = corr.samples[a];
    const auto& y = corr.samples[b];
    if (x.src != y.src)
        return x.src < y.src;
    if (x.tgt != y.tgt)
        return x.tgt < y.tgt;
    return corr.weight(a) < corr.weight(b);
}

double loss_term(double r, LossKind kind) noexcept
{
    return kind == LossKind::l1 ? std::abs(r) : r * r;
}

double loss_slope(double r, LossKind kind) noexcept
{
    if (kind == LossKind::l2)
        return 2.0 * r;
    return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
}

struct ParamGrad
{
    std::array<double, KanParams::kPairs> u{};
    std::array<double, KanParams::kPairs> v{};
    std::array<double, KanParams::kCoeffs> c{};
};

// Accumulates d(loss)/d(params) for one pixel's output slope g_j, scaled by
// `weight` (the blending weight of the tile owning `grad`).
void accumulate_grad(ParamGrad& grad, const KanParams& p, const detail::KanFeatures& f,
                     const std::array<double, KanParams::kPairs>& spline, const Rgb& slope,
                     double weight) noexcept
{
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
        {
            const double g = weight * slope[j];
            if (g == 0.0)
                continue;
            const std::size_t ij = KanParams::pair(i, j);
            grad.u[ij] += g * f.s[i];
            grad.v[ij] += g * spline[ij];
            const double gv = g * p.v[ij];
            for (std::size_t m = 0; m < kBasisCount; ++m)
                grad.c[ij * kBasisCount + m] += gv * f.b[i][m];
        }
}

void descend(KanParams& p, const ParamGrad& g, double step) noexcept
{
    for (std::size_t n = 0; n < KanParams::kPairs; ++n)
    {
        p.u[n] -= step * g.u[n];
        p.v[n] -= step * g.v[n];
    }
    for (std::size_t n = 0; n < KanParams::kCoeffs; ++n)
        p.c[n] -= step * g.c[n];
}

} // namespace

void FitConfig::validate() const
{
    if (iters < 1)
        throw ContractError("iters must be >= 1");
    check_lambda(ridge_lambda, "ridge_lambda");
    check_lambda(smooth_lambda, "smooth_lambda");
    if (!(std::isfinite(step) && step > 0.0))
        throw ContractError("step must be a positive finite value");
    if (tile_rows < 1 || tile_cols < 1)
        throw ContractError("tile grid must be at least 1x1");
}

double correspondence_loss(const KanParams& p, const CorrespondenceSet& corr, LossKind kind)
{
    corr.validate();
    double total = 0.0;
    double mass = 0.0;
    for (std::size_t n = 0; n < corr.size(); ++n)
    {
        const Rgb y = kan_eval(p, corr.samples[n].src);
        const double w = corr.weight(n);
        for (std::size_t j = 0; j < 3; ++j)
            total += w * loss_term(y[j] - corr.samples[n].tgt[j], kind);
        mass += w;
    }
    if (!(mass > 0.0))
        throw ContractError("correspondence weights sum to zero");
    return total / (3.0 * mass);
}

KanParams fit_global_ls(const CorrespondenceSet& corr, double ridge_lambda)
{
    corr.validate();
    check_lambda(ridge_lambda, "ridge_lambda");

    std::vector<std::size_t> order(corr.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return sample_less(corr, a, b); });

    const auto n = static_cast<Eigen::Index>(corr.size());
    const Eigen::Index extra = ridge_lambda > 0.0 ? kSplineFeatures : 0;
    Eigen::MatrixXd a(n + extra, kFeatures);
    Eigen::MatrixXd b(n + extra, 3);
    for (Eigen::Index k = 0; k < n; ++k)
    {
        const std::size_t idx = order[static_cast<std::size_t>(k)];
        const double sw = std::sqrt(corr.weight(idx));
        feature_row(corr.samples[idx].src, sw, a, k);
        for (Eigen::Index j = 0; j < 3; ++j)
            b(k, j) = sw * corr.samples[idx].tgt[static_cast<std::size_t>(j)];
    }
    if (extra > 0)
        append_ridge(a, b, n, ridge_lambda);
    return to_params(solve_stacked(a, b, ridge_lambda == 0.0));
}

namespace
{

class SampleLoss
{
public:
    SampleLoss(const CorrespondenceSet& corr, LossKind kind) : corr_(corr), kind_(kind)
    {
        corr.validate();
        feats_.reserve(corr.size());
        double mass = 0.0;
        for (std::size_t n = 0; n < corr.size(); ++n)
        {
            feats_.push_back(detail::kan_features(corr.samples[n].src));
            mass += corr.weight(n);
        }
        if (!(mass > 0.0))
            throw ContractError("correspondence weights sum to zero");
        norm_ = 1.0 / (3.0 * mass);
    }

    double evaluate(const KanParams& p, ParamGrad& grad) const
    {
        grad = ParamGrad{};
        double total = 0.0;
        std::array<double, KanParams::kPairs> spline{};
        for (std::size_t n = 0; n < corr_.size(); ++n)
        {
            const Rgb y = detail::kan_eval_features(p, feats_[n], &spline);
            const double w = corr_.weight(n);
            Rgb slope{};
            for (std::size_t j = 0; j < 3; ++j)
            {
                const double r = y[j] - corr_.samples[n].tgt[j];
                total += w * loss_term(r, kind_);
                slope[j] = w * norm_ * loss_slope(r, kind_);
            }
            accumulate_grad(grad, p, feats_[n], spline, slope, 1.0);
        }
        return total * norm_;
    }

private:
    const CorrespondenceSet& corr_;
    LossKind kind_;
    std::vector<detail::KanFeatures> feats_;
    double norm_ = 0.0;
};

} // namespace

std::array<double, KanParams::kCount> loss_gradient(const KanParams& p,
                                                    const CorrespondenceSet& corr, LossKind kind)
{
    if (!p.finite())
        throw DomainError("KAN parameters contain non-finite values");
    ParamGrad grad;
    SampleLoss(corr, kind).evaluate(p, grad);
    KanParams g;
    g.u = grad.u;
    g.v = grad.v;
    g.c = grad.c;
    return g.flatten();
}

KanParams fit_global_gd(const CorrespondenceSet& corr, const FitConfig& cfg,
                        const KanParams& init, DescentTrace* trace)
{
    cfg.validate();
    if (!init.finite())
        throw DomainError("initial KAN parameters contain non-finite values");
    const SampleLoss objective(corr, cfg.loss);

    KanParams current = init;
    KanParams best = init;
    ParamGrad grad;
    DescentTrace local;
    for (int it = 0;; ++it)
    {
        const double loss = objective.evaluate(current, grad);
        if (!std::isfinite(loss))
            throw SolverError("non-finite loss at gradient-descent iteration " +
                              std::to_string(it));
        local.losses.push_back(loss);
        if (it == 0 || loss < local.best_loss)
        {
            local.best_loss = loss;
            local.best_iter = static_cast<std::size_t>(it);
            best = current;
        }
        if (it == cfg.iters)
            break;
        descend(current, grad, cfg.step);
    }
    local.initial_loss = local.losses.front();
    if (trace)
        *trace = std::move(local);
    return best;
}

ParamMap fit_tiled(const ImageBuf& src, const ImageBuf& tgt, const FitConfig& cfg,
                   TiledFitReport* report)
{
    cfg.validate();
    if (!src.same_shape(tgt))
        throw ContractError("source is " + std::to_string(src.height()) + "x" +
                            std::to_string(src.width()) + " but target is " +
                            std::to_string(tgt.height()) + "x" + std::to_string(tgt.width()));
    if (src.pixel_count() == 0)
        throw ContractError("cannot fit empty images");
    src.check_finite();
    tgt.check_finite();

    const std::size_t rows = cfg.tile_rows;
    const std::size_t cols = cfg.tile_cols;
    const std::size_t tiles = rows * cols;

    std::vector<std::vector<std::size_t>> members(tiles);
    for (std::size_t y = 0; y < src.height(); ++y)
    {
        const std::size_t r = tile_of(static_cast<double>(y), src.height(), rows);
        for (std::size_t x = 0; x < src.width(); ++x)
        {
            const std::size_t c = tile_of(static_cast<double>(x), src.width(), cols);
            members[r * cols + c].push_back(y * src.width() + x);
        }
    }

    TiledFitReport local;
    const bool require_full_rank = cfg.ridge_lambda == 0.0;

    // Each tile's data term is compressed to its R factor: ||A p - b||^2 equals
    // ||R p - Q^T b||^2 up to a constant.
    std::vector<Eigen::MatrixXd> r_factor(tiles);
    std::vector<Eigen::MatrixXd> z_factor(tiles);
    std::vector<bool> fallback(tiles, false);
    std::vector<Weights> solution(tiles);
    std::optional<Weights> global;

    for (std::size_t t = 0; t < tiles; ++t)
    {
        const auto& px = members[t];
        if (px.size() < kMinTilePixels)
        {
            fallback[t] = true;
            ++local.fallback_tiles;
            local.warnings.push_back("tile " + std::to_string(t / cols) + "," +
                                     std::to_string(t % cols) + " has " +
                                     std::to_string(px.size()) +
                                     " pixels; using the global fit");
            if (!global)
                global = from_params(
                    fit_global_ls(correspondences_from_images(src, tgt), cfg.ridge_lambda));
            solution[t] = *global;
            continue;
        }
        const auto n = static_cast<Eigen::Index>(px.size());
        Eigen::MatrixXd a(n, kFeatures);
        Eigen::MatrixXd b(n, 3);
        for (Eigen::Index k = 0; k < n; ++k)
        {
            const std::size_t p = px[static_cast<std::size_t>(k)];
            const std::size_t y = p / src.width();
            const std::size_t x = p % src.width();
            feature_row(src.pixel(y, x), 1.0, a, k);
            for (Eigen::Index j = 0; j < 3; ++j)
                b(k, j) = tgt.at(y, x, static_cast<std::size_t>(j));
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        const Eigen::Index keep = std::min(n, kFeatures);
        r_factor[t] = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
        z_factor[t] = (qr.householderQ().transpose() * b).topRows(keep);
    }

    auto neighbours = [&](std::size_t t) {
        std::vector<std::size_t> out;
        const std::size_t r = t / cols;
        const std::size_t c = t % cols;
        if (r > 0)
            out.push_back(t - cols);
        if (r + 1 < rows)
            out.push_back(t + cols);
        if (c > 0)
            out.push_back(t - 1);
        if (c + 1 < cols)
            out.push_back(t + 1);
        return out;
    };

    auto solve_tile = [&](std::size_t t, double smooth) {
        const std::vector<std::size_t> nb = smooth > 0.0 ? neighbours(t) : std::vector<std::size_t>{};
        const Eigen::Index data_rows = r_factor[t].rows();
        const Eigen::Index ridge_rows = cfg.ridge_lambda > 0.0 ? kSplineFeatures : 0;
        const Eigen::Index total =
            data_rows + ridge_rows + static_cast<Eigen::Index>(nb.size()) * kFeatures;
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(total, kFeatures);
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(total, 3);
        a.topRows(data_rows) = r_factor[t];
        b.topRows(data_rows) = z_factor[t];
        if (ridge_rows > 0)
            append_ridge(a, b, data_rows, cfg.ridge_lambda);
        Eigen::Index at = data_rows + ridge_rows;
        const double s = std::sqrt(smooth);
        for (std::size_t n : nb)
        {
            a.block(at, 0, kFeatures, kFeatures) =
                s * Eigen::MatrixXd::Identity(kFeatures, kFeatures);
            b.block(at, 0, kFeatures, 3) = s * solution[n];
            at += kFeatures;
        }
        return solve_stacked(a, b, require_full_rank && nb.empty());
    };

    for (std::size_t t = 0; t < tiles; ++t)
        if (!fallback[t])
            solution[t] = solve_tile(t, 0.0);

    if (cfg.smooth_lambda > 0.0)
    {
        constexpr std::size_t kMinSweeps = 3;
        constexpr std::size_t kMaxSweeps = 1000;
        constexpr double kTolerance = 1e-6;
        for (std::size_t sweep = 1; sweep <= kMaxSweeps; ++sweep)
        {
            double delta = 0.0;
            for (std::size_t t = 0; t < tiles; ++t)
            {
                if (fallback[t])
                    continue;
                const Weights next = solve_tile(t, cfg.smooth_lambda);
                delta = std::max(delta, (next - solution[t]).cwiseAbs().maxCoeff());
                solution[t] = next;
            }
            local.sweeps = sweep;
            local.max_delta = delta;
            if (sweep >= kMinSweeps && delta < kTolerance)
                break;
        }
        if (local.max_delta >= kTolerance)
            local.warnings.push_back("smoothing stopped before reaching tolerance");
    }

    ParamMap map;
    map.height_t = rows;
    map.width_t = cols;
    map.interp = Interp::bilinear;
    map.source_h = src.height();
    map.source_w = src.width();
    map.params.reserve(tiles);
    for (const auto& w : solution)
        map.params.push_back(to_params(w));
    if (report)
        *report = std::move(local);
    return map;
}

double inter_tile_variance(const ParamMap& map)
{
    map.validate();
    const double n = static_cast<double>(map.tile_count());
    std::array<double, KanParams::kCount> mean{};
    for (const auto& p : map.params)
    {
        const auto f = p.flatten();
        for (std::size_t k = 0; k < f.size(); ++k)
            mean[k] += f[k] / n;
    }
    double var = 0.0;
    for (const auto& p : map.params)
    {
        const auto f = p.flatten();
        for (std::size_t k = 0; k < f.size(); ++k)
            var += (f[k] - mean[k]) * (f[k] - mean[k]);
    }
    return var / (n * static_cast<double>(KanParams::kCount));
}

double image_l1(const ParamMap& map, const ImageBuf& src, const ImageBuf& tgt)
{
    if (!src.same_shape(tgt))
        throw ContractError("source and target images differ in size");
    const ImageBuf out = apply(map, src);
    double total = 0.0;
    const auto a = out.data();
    const auto b = tgt.data();
    for (std::size_t k = 0; k < a.size(); ++k)
        total += std::abs(a[k] - b[k]);
    return total / static_cast<double>(a.size());
}

ParamMap finetune_paired(const ParamMap& map, const ImageBuf& src, const ImageBuf& tgt,
                         int iters, double step, DescentTrace* trace)
{
    if (iters < 1)
        throw ContractError("finetune_paired requires iters >= 1");
    if (!(std::isfinite(step) && step > 0.0))
        throw ContractError("step must be a positive finite value");
    map.validate();
    if (!src.same_shape(tgt))
        throw ContractError("source and target images differ in size");
    if (src.height() != map.source_h || src.width() != map.source_w)
        throw ContractError("parameter map was fitted for " + std::to_string(map.source_h) + "x" +
                            std::to_string(map.source_w) + " images");
    src.check_finite();
    tgt.check_finite();

    const std::size_t npx = src.pixel_count();
    std::vector<TileWeights> weights(npx);
    std::vector<detail::KanFeatures> feats(npx);
    for (std::size_t y = 0; y < src.height(); ++y)
        for (std::size_t x = 0; x < src.width(); ++x)
        {
            const std::size_t k = y * src.width() + x;
            weights[k] = tile_weights(map, static_cast<double>(x), static_cast<double>(y));
            feats[k] = detail::kan_features(src.pixel(y, x));
        }
    const auto target = tgt.data();
    const double norm = 1.0 / (3.0 * static_cast<double>(npx));

    // The forward pass mirrors apply(): blended parameters, kan_eval, clamp.
    auto evaluate = [&](const ParamMap& m, std::vector<ParamGrad>* grad) {
        if (grad)
            grad->assign(m.tile_count(), ParamGrad{});
        double total = 0.0;
        std::array<double, KanParams::kPairs> spline{};
        for (std::size_t k = 0; k < npx; ++k)
        {
            const KanParams p = blend(m, weights[k]);
            const Rgb y = detail::kan_eval_features(p, feats[k], &spline);
            Rgb slope{};
            bool any = false;
            for (std::size_t j = 0; j < 3; ++j)
            {
                const double r = clamp01(y[j]) - target[k * 3 + j];
                total += std::abs(r);
                if (y[j] >= 0.0 && y[j] <= 1.0 && r != 0.0)
                {
                    slope[j] = norm * (r > 0.0 ? 1.0 : -1.0);
                    any = true;
                }
            }
            if (!grad || !any)
                continue;
            for (std::size_t n = 0; n < weights[k].count; ++n)
                accumulate_grad((*grad)[weights[k].index[n]], p, feats[k], spline, slope,
                                weights[k].weight[n]);
        }
        return total * norm;
    };

    ParamMap current = map;
    std::vector<ParamGrad> grad;
    DescentTrace local;
    double loss = evaluate(current, &grad);
    if (!std::isfinite(loss))
        throw SolverError("non-finite loss at fine-tuning iteration 0");
    local.losses.push_back(loss);
    local.initial_loss = loss;
    local.best_loss = loss;

    constexpr int kMaxHalvings = 30;
    double eta = step;
    for (int it = 1; it <= iters; ++it)
    {
        bool accepted = false;
        for (int h = 0; h <= kMaxHalvings && !accepted; ++h)
        {
            ParamMap trial = current;
            for (std::size_t t = 0; t < trial.tile_count(); ++t)
                descend(trial.params[t], grad[t], eta);
            const double trial_loss = evaluate(trial, nullptr);
            if (std::isfinite(trial_loss) && trial_loss < loss)
            {
                current = std::move(trial);
                loss = trial_loss;
                accepted = true;
            }
            else
            {
                eta *= 0.5;
            }
        }
        if (!accepted)
            break;
        eta *= 2.0;
        local.losses.push_back(loss);
        local.best_loss = loss;
        local.best_iter = static_cast<std::size_t>(it);
        if (it < iters)
            loss = evaluate(current, &grad);
    }
    if (trace)
        *trace = std::move(local);
    return current;
}

} // namespace kanmatch
