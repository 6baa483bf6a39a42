// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kanmatch/error.hpp"
#include "kanmatch/metrics.hpp"

namespace kanmatch
{

void LossWeights::validate() const
{
    for (double b : {beta0, beta1, beta2, beta3})
        if (!(std::isfinite(b) && b >= 0.0))
            throw ContractError("loss weights must be finite and non-negative");
}

double pixelwise_loss(const ImageBuf& y, const ImageBuf& yhat, double beta0)
{
    if (!y.same_shape(yhat))
        throw ContractError("pixelwise_loss: images are " + std::to_string(y.height()) + "x" +
                            std::to_string(y.width()) + " and " + std::to_string(yhat.height()) +
                            "x" + std::to_string(yhat.width()));
    if (y.pixel_count() == 0)
        throw ContractError("pixelwise_loss: images are empty");
    if (!(std::isfinite(beta0) && beta0 >= 0.0))
        throw ContractError("pixelwise_loss: beta0 must be finite and non-negative");
    const auto a = y.data();
    const auto b = yhat.data();
    double l1 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        l1 += std::abs(a[k] - b[k]);
    l1 /= static_cast<double>(a.size());
    if (beta0 == 0.0)
        return l1;
    return l1 + beta0 * (1.0 - ssim(y, yhat));
}

double gan_loss(double score, int label)
{
    if (label != 0 && label != 1)
        throw ContractError("gan_loss label must be 0 or 1, got " + std::to_string(label));
    const double s = std::isnan(score) ? 0.5 : std::clamp(score, kScoreEpsilon, 1.0 - kScoreEpsilon);
    return label == 1 ? -std::log(s) : -std::log1p(-s);
}

std::pair<double, double> discriminator_objective(const DiscriminatorScorer& d_a,
                                                  const DiscriminatorScorer& d_b,
                                                  const ImageBuf& a, const ImageBuf& b,
                                                  const ImageBuf& fake_a, const ImageBuf& fake_b)
{
    const double dis_a = gan_loss(d_a.score(fake_a), 0) + gan_loss(d_a.score(a), 1);
    const double dis_b = gan_loss(d_b.score(fake_b), 0) + gan_loss(d_b.score(b), 1);
    return {dis_a, dis_b};
}

double generator_objective(const GeneratorTerms& t, const LossWeights& w)
{
    w.validate();
    return w.beta1 * (t.gan_a + t.gan_b) + w.beta2 * (t.idt_a + t.idt_b) +
           w.beta3 * (t.cyc_a + t.cyc_b);
}

GeneratorTerms generator_terms(const ImageMapper& g_ab, const ImageMapper& g_ba,
                               const DiscriminatorScorer& d_a, const DiscriminatorScorer& d_b,
                               const ImageBuf& a, const ImageBuf& b, const LossWeights& w)
{
    w.validate();
    const ImageBuf fake_b = g_ab(a);
    const ImageBuf fake_a = g_ba(b);
    GeneratorTerms t;
    t.gan_a = gan_loss(d_a.score(fake_a), 1);
    t.gan_b = gan_loss(d_b.score(fake_b), 1);
    t.idt_a = pixelwise_loss(g_ba(a), a, w.beta0);
    t.idt_b = pixelwise_loss(g_ab(b), b, w.beta0);
    t.cyc_a = pixelwise_loss(g_ba(fake_b), a, w.beta0);
    t.cyc_b = pixelwise_loss(g_ab(fake_a), b, w.beta0);
    return t;
}

} // namespace kanmatch
