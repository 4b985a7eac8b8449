#pragma once

#include <cstdint>
#include <optional>

#include "stablefield/cov_models.hpp"
#include "stablefield/grid.hpp"
#include "stablefield/measure.hpp"

// Grid realizations of Gaussian, sub-Gaussian and Poisson shot-noise fields.

namespace stablefield {

// Dense-factorization simulators refuse larger grids.
inline constexpr std::size_t kMaxDenseSites = 4096;

// Stationary (or intrinsically defined) Gaussian field by Cholesky
// factorization of the covariance Gram matrix, with the escalating jitter
// ladder from jittered_llt.
GridField gaussian_sim(const CovModel& model, const GridSpec& grid,
                       std::uint64_t seed);

// One draw of the subordinator A ~ S_{alpha/2}((cos(pi alpha/4))^{2/alpha}, 1, 0).
double sub_gaussian_scale(double alpha, std::uint64_t seed);

// X(t) = sqrt(A) G(t) with one A per realization. The Gaussian layer uses
// the same stream as gaussian_sim(model, grid, seed); fixed_scale substitutes
// a deterministic A (diagnostics and the alpha -> 2 limit).
GridField sub_gaussian_sim(const CovModel& model, double alpha,
                           const GridSpec& grid, std::uint64_t seed,
                           std::optional<double> fixed_scale = std::nullopt);

// Poisson shot noise X(t) = sum_i f(t - x_i), points drawn on the grid's
// bounding box padded by the kernel support radius.
GridField shot_noise_sim(double intensity, const Kernel& kernel,
                         const GridSpec& grid, std::uint64_t seed);

}  // namespace stablefield
