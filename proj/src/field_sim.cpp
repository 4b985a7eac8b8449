#include "stablefield/field_sim.hpp"

#include <cmath>

#include "stablefield/linalg.hpp"
#include "stablefield/stable.hpp"

namespace stablefield {

GridField gaussian_sim(const CovModel& model, const GridSpec& grid,
                       std::uint64_t seed) {
  grid.validate();
  const std::size_t n = grid.size();
  if (n > kMaxDenseSites)
    throw std::invalid_argument(
        "grid exceeds the dense factorization limit of 4096 sites");
  if (grid.dim() != model.dim())
    throw DimensionMismatch("grid dimension does not match the model");

  const auto sites = grid.sites();
  Eigen::MatrixXd gram(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      gram(i, j) = gram(j, i) = model(sites[i], sites[j]);

  // Sites with zero variance are almost surely zero (their whole Gram row
  // vanishes by positive semidefiniteness); pinning them keeps the jitter
  // ladder away from exactly singular rows. Every site still consumes one
  // normal draw, so the stream layout does not depend on the pinning.
  std::vector<Eigen::Index> active;
  for (std::size_t i = 0; i < n; ++i)
    if (gram(i, i) > 0.0) active.push_back(static_cast<Eigen::Index>(i));

  Rng rng(seed);
  Eigen::VectorXd z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = rng.normal();

  GridField f;
  f.grid = grid;
  f.seed = seed;
  f.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  f.meta["kind"] = "gaussian";
  if (active.empty()) return f;

  const Eigen::Index m = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd sub(m, m);
  Eigen::VectorXd zs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    zs[i] = z[active[i]];
    for (Eigen::Index j = 0; j < m; ++j) sub(i, j) = gram(active[i], active[j]);
  }
  const Eigen::VectorXd draw = jittered_llt(sub).matrixL() * zs;
  for (Eigen::Index i = 0; i < m; ++i) f.values[active[i]] = draw[i];
  return f;
}

double sub_gaussian_scale(double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 2.0))
    throw InvalidAlpha("the sub-Gaussian subordinator needs alpha in (0, 2)");
  const double sigma =
      std::pow(std::cos(3.14159265358979323846 * alpha / 4.0), 2.0 / alpha);
  // Separate stream so the Gaussian layer matches gaussian_sim exactly.
  Rng rng(Rng::mix(seed, 0x5ab6a0ull));
  return sample_one(StableParams(alpha / 2.0, sigma, 1.0, 0.0), rng);
}

GridField sub_gaussian_sim(const CovModel& model, double alpha,
                           const GridSpec& grid, std::uint64_t seed,
                           std::optional<double> fixed_scale) {
  const double a = fixed_scale ? *fixed_scale : sub_gaussian_scale(alpha, seed);
  if (!(a >= 0.0)) throw std::invalid_argument("scale draw must be nonnegative");
  GridField f = gaussian_sim(model, grid, seed);
  f.values *= std::sqrt(a);
  f.meta["kind"] = "sub_gaussian";
  return f;
}

GridField shot_noise_sim(double intensity, const Kernel& kernel,
                         const GridSpec& grid, std::uint64_t seed) {
  grid.validate();
  if (!(intensity >= 0.0))
    throw std::invalid_argument("intensity must be nonnegative");
  if (grid.dim() != kernel.dim)
    throw DimensionMismatch("grid dimension does not match the kernel");

  // Pad the observation window so points outside it still contribute.
  const int d = grid.dim();
  Eigen::VectorXd lo(d), hi(d);
  double volume = 1.0;
  for (int i = 0; i < d; ++i) {
    lo[i] = grid.origin[i] - kernel.support_radius;
    hi[i] = grid.origin[i] + (grid.counts[i] - 1) * grid.spacing[i] +
            kernel.support_radius;
    volume *= hi[i] - lo[i];
  }

  Rng rng(seed);
  const std::uint64_t npts = rng.poisson(intensity * volume);
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(npts);
  for (std::uint64_t k = 0; k < npts; ++k) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = rng.uniform(lo[i], hi[i]);
    pts.push_back(std::move(x));
  }

  GridField f;
  f.grid = grid;
  f.seed = seed;
  f.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  const std::size_t n = grid.size();
  for (std::size_t s = 0; s < n; ++s) {
    const Eigen::VectorXd site = grid.site(s);
    double acc = 0.0;
    for (const auto& x : pts) {
      const Eigen::VectorXd diff = site - x;
      if (diff.norm() <= kernel.support_radius) acc += kernel(diff);
    }
    f.values[static_cast<Eigen::Index>(s)] = acc;
  }
  f.meta["kind"] = "shot_noise";
  return f;
}

}  // namespace stablefield
