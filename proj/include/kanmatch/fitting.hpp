// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "kanmatch/correspondence.hpp"
#include "kanmatch/image.hpp"
#include "kanmatch/kan.hpp"

namespace kanmatch
{

enum class Solver
{
    ls,
    gd
};

enum class LossKind
{
    l1,
    l2
};

inline constexpr double kDefaultRidge = 1e-6;

struct FitConfig
{
    Solver solver = Solver::ls;
    double ridge_lambda = kDefaultRidge;
    int iters = 10;
    double step = 1e-2;
    LossKind loss = LossKind::l1;
    std::size_t tile_rows = 8;
    std::size_t tile_cols = 8;
    double smooth_lambda = 0.0;

    void validate() const;
};

/// Loss history of a descent run. losses[0] is the initial loss.
struct DescentTrace
{
    std::vector<double> losses;
    double initial_loss = 0.0;
    double best_loss = 0.0;
    std::size_t best_iter = 0;
};

/// Mean absolute or squared residual over all samples and channels
/// (weighted mean when the set carries weights).
double correspondence_loss(const KanParams& p, const CorrespondenceSet& corr, LossKind kind);

/// Analytic gradient of correspondence_loss() in KanParams flat order. The L1
/// subgradient uses sign(0) = 0.
std::array<double, KanParams::kCount> loss_gradient(const KanParams& p,
                                                    const CorrespondenceSet& corr, LossKind kind);

/// Ridge least squares over the 27 linear features per output channel
/// (3 silu terms, 24 basis terms). The ridge penalises spline weights only.
/// Returns v = 1 with the solved weights folded into c. Samples are sorted
/// before accumulation, so the result does not depend on sample order.
///
/// The three per-channel basis sums are all identically 1, so the unregularised
/// system is rank deficient and ridge_lambda == 0 raises SolverError.
KanParams fit_global_ls(const CorrespondenceSet& corr, double ridge_lambda = kDefaultRidge);

/// Full-batch gradient descent on u, v, c with a fixed step; returns the
/// lowest-loss iterate. Uses cfg.iters, cfg.step and cfg.loss.
KanParams fit_global_gd(const CorrespondenceSet& corr, const FitConfig& cfg,
                        const KanParams& init, DescentTrace* trace = nullptr);

struct TiledFitReport
{
    std::size_t sweeps = 0;
    double max_delta = 0.0;
    std::size_t fallback_tiles = 0;
    std::vector<std::string> warnings;
};

/// Per-tile ridge least squares coupled by smooth_lambda * sum ||p_t - p_n||^2
/// over 4-neighbours, solved by block Gauss-Seidel sweeps. Tiles with fewer
/// than 10 pixels use the global fit instead.
ParamMap fit_tiled(const ImageBuf& src, const ImageBuf& tgt, const FitConfig& cfg,
                   TiledFitReport* report = nullptr);

/// Variance across tiles, averaged over the 90 parameters.
double inter_tile_variance(const ParamMap& map);

/// Mean L1 between apply(map, src) and tgt over all pixels and channels.
double image_l1(const ParamMap& map, const ImageBuf& src, const ImageBuf& tgt);

inline constexpr double kFinetuneStep = 1.0;

/// Paired fine-tuning: `iters` subgradient steps on the mean L1 image loss
/// with respect to every tile's (u, v, c), gradients routed through the
/// interpolation weights. Each step halves its step size until the loss
/// decreases (up to 30 times); successful steps double it for the next one.
/// Returns the best iterate.
ParamMap finetune_paired(const ParamMap& map, const ImageBuf& src, const ImageBuf& tgt,
                         int iters = 10, double step = kFinetuneStep,
                         DescentTrace* trace = nullptr);

} // namespace kanmatch
