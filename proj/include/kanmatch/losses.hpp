// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <functional>
#include <utility>

#include "kanmatch/image.hpp"

namespace kanmatch
{

struct LossWeights
{
    double beta0 = 0.15; // SSIM term of the pixel-wise loss
    double beta1 = 1.0;  // adversarial
    double beta2 = 10.0; // identity
    double beta3 = 0.5;  // cycle

    void validate() const;
};

inline constexpr double kScoreEpsilon = 1e-7;

/// Probability that an image is real. Implementations should return values
/// in (0,1); losses clamp to [1e-7, 1 - 1e-7] regardless.
class DiscriminatorScorer
{
public:
    virtual ~DiscriminatorScorer() = default;
    virtual double score(const ImageBuf& img) const = 0;
};

/// mean |y - yhat| + beta0 * (1 - ssim(y, yhat)). With beta0 == 0 the SSIM
/// term is skipped, so images smaller than the SSIM window are accepted.
double pixelwise_loss(const ImageBuf& y, const ImageBuf& yhat, double beta0 = 0.15);

/// Binary cross-entropy of a probability score against label 0 or 1.
double gan_loss(double score, int label);

/// (L_dis_A, L_dis_B): each discriminator scores its real image as 1 and the
/// generated image of its domain as 0.
std::pair<double, double> discriminator_objective(const DiscriminatorScorer& d_a,
                                                  const DiscriminatorScorer& d_b,
                                                  const ImageBuf& a, const ImageBuf& b,
                                                  const ImageBuf& fake_a, const ImageBuf& fake_b);

struct GeneratorTerms
{
    double gan_a = 0.0;
    double gan_b = 0.0;
    double idt_a = 0.0;
    double idt_b = 0.0;
    double cyc_a = 0.0;
    double cyc_b = 0.0;
};

/// beta1 (gan_a + gan_b) + beta2 (idt_a + idt_b) + beta3 (cyc_a + cyc_b).
double generator_objective(const GeneratorTerms& terms, const LossWeights& w = {});

using ImageMapper = std::function<ImageBuf(const ImageBuf&)>;

/// Evaluates every generator term for one unpaired sample (a, b):
///   fake_a = g_ba(b), fake_b = g_ab(a)
///   gan_a = gan(d_a(fake_a), 1), idt_a = pixelwise(g_ba(a), a),
///   cyc_a = pixelwise(g_ba(g_ab(a)), a), and symmetrically for b.
GeneratorTerms generator_terms(const ImageMapper& g_ab, const ImageMapper& g_ba,
                               const DiscriminatorScorer& d_a, const DiscriminatorScorer& d_b,
                               const ImageBuf& a, const ImageBuf& b, const LossWeights& w = {});

} // namespace kanmatch
