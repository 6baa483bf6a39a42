// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include "kanmatch/spline.hpp"

#include <cmath>
#include <string>

#include "kanmatch/error.hpp"

namespace kanmatch
{

SplineGrid SplineGrid::uniform(int grid_size, int order)
{
    if (grid_size < 1 || order < 1)
        throw ContractError("spline grid size and order must be positive");
    SplineGrid grid;
    grid.grid_size = grid_size;
    grid.order = order;
    grid.knots.reserve(static_cast<std::size_t>(grid_size + 2 * order + 1));
    for (int i = -order; i <= grid_size + order; ++i)
        grid.knots.push_back(static_cast<double>(i) / grid_size);
    return grid;
}

void SplineGrid::validate() const
{
    if (grid_size < 1 || order < 1)
        throw ContractError("spline grid size and order must be positive");
    const auto expected = static_cast<std::size_t>(grid_size + 2 * order + 1);
    if (knots.size() != expected)
        throw ContractError("knot count " + std::to_string(knots.size()) + " != G+2k+1 = " +
                            std::to_string(expected));
    const double h = 1.0 / grid_size;
    for (std::size_t i = 1; i < knots.size(); ++i)
    {
        const double d = knots[i] - knots[i - 1];
        if (!(d > 0.0) || std::abs(d - h) > 1e-12)
            throw ContractError("knots must be strictly increasing with spacing 1/G");
    }
}

const SplineGrid& default_grid()
{
    static const SplineGrid grid = SplineGrid::uniform(kGridSize, kSplineOrder);
    return grid;
}

void basis_vector(double x, const SplineGrid& grid, std::span<double> out)
{
    if (!std::isfinite(x))
        throw DomainError("spline input must be finite");
    if (out.size() != grid.basis_count())
        throw ContractError("basis output span has the wrong size");

    x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
    const auto& t = grid.knots;
    const std::size_t intervals = t.size() - 1;

    // Degree-0 functions over half-open knot intervals, then raise the degree
    // in place; entry i always holds B_{i,d}.
    std::array<double, 64> small{};
    std::vector<double> large;
    double* b = small.data();
    if (intervals > small.size())
    {
        large.assign(intervals, 0.0);
        b = large.data();
    }
    for (std::size_t i = 0; i < intervals; ++i)
        b[i] = (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;

    for (int d = 1; d <= grid.order; ++d)
    {
        const std::size_t n = intervals - static_cast<std::size_t>(d);
        for (std::size_t i = 0; i < n; ++i)
        {
            const double left = (x - t[i]) / (t[i + d] - t[i]) * b[i];
            const double right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * b[i + 1];
            b[i] = left + right;
        }
    }
    for (std::size_t m = 0; m < out.size(); ++m)
        out[m] = b[m];
}

std::vector<double> basis_vector(double x, const SplineGrid& grid)
{
    std::vector<double> out(grid.basis_count());
    basis_vector(x, grid, out);
    return out;
}

Basis8 basis8(double x)
{
    Basis8 out{};
    basis_vector(x, default_grid(), out);
    return out;
}

std::vector<double> greville_abscissae(const SplineGrid& grid)
{
    std::vector<double> g(grid.basis_count());
    for (std::size_t m = 0; m < g.size(); ++m)
    {
        double s = 0.0;
        for (int r = 1; r <= grid.order; ++r)
            s += grid.knots[m + static_cast<std::size_t>(r)];
        g[m] = s / grid.order;
    }
    return g;
}

double silu(double x) noexcept
{
    return x / (1.0 + std::exp(-x));
}

} // namespace kanmatch
