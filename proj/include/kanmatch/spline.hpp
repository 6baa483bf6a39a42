// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace kanmatch
{

/// Uniform, unclamped knot grid over [0,1] extended by `order` knots on both
/// sides: t_i = i / G for i = -k .. G + k.
struct SplineGrid
{
    int grid_size = 5;
    int order = 3;
    std::vector<double> knots;

    static SplineGrid uniform(int grid_size = 5, int order = 3);

    std::size_t basis_count() const noexcept
    {
        return static_cast<std::size_t>(grid_size + order);
    }

    /// Throws ContractError when the knot vector violates the layout above.
    void validate() const;
};

inline constexpr int kGridSize = 5;
inline constexpr int kSplineOrder = 3;
inline constexpr std::size_t kBasisCount = kGridSize + kSplineOrder;

using Basis8 = std::array<double, kBasisCount>;

/// The G=5, k=3 grid shared by every KAN transform.
const SplineGrid& default_grid();

/// Cox-de Boor evaluation of all G+k basis functions at x (clamped to [0,1]).
/// Throws DomainError for non-finite x.
std::vector<double> basis_vector(double x, const SplineGrid& grid);

/// Allocation-free variant; `out` must hold grid.basis_count() entries.
void basis_vector(double x, const SplineGrid& grid, std::span<double> out);

/// basis_vector() on the default grid.
Basis8 basis8(double x);

/// Coefficients c_m for which sum_m c_m B_m(x) == x.
std::vector<double> greville_abscissae(const SplineGrid& grid);

/// x * sigmoid(x).
double silu(double x) noexcept;

} // namespace kanmatch
