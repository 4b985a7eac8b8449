#include "stablefield/kriging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "optim_detail.hpp"
#include "stablefield/errors.hpp"
#include "stablefield/linalg.hpp"
#include "stablefield/parallel.hpp"
#include "stablefield/rng.hpp"

namespace stablefield {

namespace {

constexpr double kDuplicateTol = 1e-12;

double mean_at(const Observations& obs, const Eigen::VectorXd& x) {
  return obs.mean_fn ? obs.mean_fn(x) : 0.0;
}

Eigen::MatrixXd cov_matrix(const CovModel& model, const Observations& obs) {
  const int n = static_cast<int>(obs.sites.size());
  Eigen::MatrixXd sigma(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double c = model(obs.sites[i], obs.sites[j]);
      sigma(i, j) = c;
      sigma(j, i) = c;
    }
  }
  return sigma;
}

Eigen::VectorXd cov_vector(const CovModel& model, const Observations& obs,
                           const Eigen::VectorXd& target) {
  const int n = static_cast<int>(obs.sites.size());
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) c(i) = model(obs.sites[i], target);
  return c;
}

double angle_between(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  const double c = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
  return std::acos(c);
}

// Lag vectors are unordered, so a pair matches the cone if either the vector
// or its negation falls within tolerance of the axis.
bool in_cone(const Eigen::VectorXd& lag, const DirectionSpec& dir) {
  const double tol = dir.tolerance_deg * std::numbers::pi / 180.0;
  const double a = angle_between(lag, dir.direction);
  return std::min(a, std::numbers::pi - a) <= tol + 1e-15;
}

struct BinAccumulator {
  std::vector<double> sum;
  std::vector<std::uint64_t> count;

  explicit BinAccumulator(int bins) : sum(bins, 0.0), count(bins, 0) {}

  void add(const LagBins& bins, double h, const Eigen::VectorXd& lag,
           const std::optional<DirectionSpec>& dir, double sq_diff) {
    if (h <= bins.edges.front() || h > bins.edges.back()) return;
    if (dir && !in_cone(lag, *dir)) return;
    const auto it =
        std::lower_bound(bins.edges.begin(), bins.edges.end(), h);
    const int k = static_cast<int>(it - bins.edges.begin()) - 1;
    if (k < 0 || k >= bins.count()) return;
    sum[k] += sq_diff;
    count[k] += 1;
  }

  VariogramEstimate finish(const LagBins& bins,
                           const std::optional<DirectionSpec>& dir) const {
    VariogramEstimate est;
    est.direction_label = dir ? dir->label : "omnidirectional";
    for (int k = 0; k < bins.count(); ++k) {
      est.h_center.push_back(bins.center(k));
      est.pair_count.push_back(count[k]);
      est.gamma.push_back(count[k] == 0
                              ? std::numeric_limits<double>::quiet_NaN()
                              : sum[k] / (2.0 * static_cast<double>(count[k])));
    }
    return est;
  }
};

// Integer grid offsets with norm at most the largest bin edge.  Enumerating
// offsets once and scanning every site against each is linear in sites for a
// fixed lag radius, unlike the quadratic all-pairs loop.
std::vector<std::vector<std::int64_t>> grid_offsets(const GridSpec& grid,
                                                    double max_lag) {
  const int d = grid.dim();
  std::vector<std::int64_t> reach(d);
  for (int ax = 0; ax < d; ++ax) {
    reach[ax] = static_cast<std::int64_t>(std::floor(
        max_lag / grid.spacing[ax] + 1e-9));
    reach[ax] = std::min<std::int64_t>(reach[ax],
                                       static_cast<std::int64_t>(
                                           grid.counts[ax]) - 1);
  }
  std::vector<std::vector<std::int64_t>> offsets;
  std::vector<std::int64_t> cur(d, 0);
  // Half-space enumeration so each unordered pair appears exactly once:
  // first nonzero coordinate (scanning from axis 0) must be positive.
  std::function<void(int)> walk = [&](int ax) {
    if (ax == d) {
      bool zero = true;
      for (std::int64_t c : cur) {
        if (c != 0) {
          zero = false;
          break;
        }
      }
      if (zero) return;
      for (std::int64_t c : cur) {
        if (c > 0) break;
        if (c < 0) return;
      }
      double h2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double step = static_cast<double>(cur[k]) * grid.spacing[k];
        h2 += step * step;
      }
      if (std::sqrt(h2) <= max_lag + 1e-12) offsets.push_back(cur);
      return;
    }
    for (std::int64_t c = -reach[ax]; c <= reach[ax]; ++c) {
      cur[ax] = c;
      walk(ax + 1);
    }
    cur[ax] = 0;
  };
  walk(0);
  return offsets;
}

void accumulate_grid(const GridField& data, const LagBins& bins,
                     const std::optional<DirectionSpec>& dir,
                     const std::vector<std::vector<std::int64_t>>& offsets,
                     BinAccumulator& acc) {
  const GridSpec& grid = data.grid;
  const int d = grid.dim();
  std::vector<std::int64_t> strides(d);
  std::int64_t s = 1;
  for (int ax = d - 1; ax >= 0; --ax) {
    strides[ax] = s;
    s *= static_cast<std::int64_t>(grid.counts[ax]);
  }
  for (const auto& off : offsets) {
    double h2 = 0.0;
    Eigen::VectorXd lag(d);
    std::int64_t flat_shift = 0;
    for (int ax = 0; ax < d; ++ax) {
      lag(ax) = static_cast<double>(off[ax]) * grid.spacing[ax];
      h2 += lag(ax) * lag(ax);
      flat_shift += off[ax] * strides[ax];
    }
    const double h = std::sqrt(h2);
    if (dir && !in_cone(lag, *dir)) continue;

    // Iterate over all base sites whose shifted partner stays in the grid.
    std::vector<std::int64_t> lo(d), hi(d);
    for (int ax = 0; ax < d; ++ax) {
      lo[ax] = std::max<std::int64_t>(0, -off[ax]);
      hi[ax] = std::min<std::int64_t>(grid.counts[ax],
                                      static_cast<std::int64_t>(
                                          grid.counts[ax]) - off[ax]);
      if (lo[ax] >= hi[ax]) {
        lo.clear();
        break;
      }
    }
    if (lo.empty()) continue;

    std::vector<std::int64_t> idx(lo);
    while (true) {
      std::int64_t flat = 0;
      for (int ax = 0; ax < d; ++ax) flat += idx[ax] * strides[ax];
      const double diff = data.values[static_cast<std::size_t>(flat)] -
                          data.values[static_cast<std::size_t>(flat + flat_shift)];
      acc.add(bins, h, lag, dir, diff * diff);
      int ax = d - 1;
      while (ax >= 0) {
        if (++idx[ax] < hi[ax]) break;
        idx[ax] = lo[ax];
        --ax;
      }
      if (ax < 0) break;
    }
  }
}

CovModel fit_model(const FitSpec& spec, double a, double b) {
  switch (spec.family) {
    case CovFamily::Exponential:
      return CovModel::exponential(spec.dim, a, b);
    case CovFamily::GaussianModel:
      return CovModel::gaussian_model(spec.dim, a, b);
    case CovFamily::Spherical:
      return CovModel::spherical(spec.dim, a, b);
    case CovFamily::WhittleMatern:
      return CovModel::whittle_matern(spec.dim, a, b, spec.nu);
    case CovFamily::Cauchy:
      return CovModel::cauchy(spec.dim, a, b, spec.nu);
    case CovFamily::StableFamily:
      return CovModel::stable_family(spec.dim, a, b, spec.nu);
    case CovFamily::Bessel:
      return CovModel::bessel(spec.dim, a, b, spec.nu);
    case CovFamily::HoleEffect:
      return CovModel::hole_effect(spec.dim, a, b);
    default:
      throw ConfigError("variogram fit: unsupported covariance family " +
                        family_name(spec.family));
  }
}

double model_gamma_at(const FitSpec& spec, double nugget, double a, double b,
                      double h) {
  if (h == 0.0) return 0.0;
  const CovModel base = fit_model(spec, a, b);
  return nugget + base.at_lag(0.0) - base.at_lag(h);
}

double fit_residual(const VariogramEstimate& table, const FitSpec& spec,
                    double nugget, double a, double b) {
  double r = 0.0;
  for (std::size_t k = 0; k < table.h_center.size(); ++k) {
    if (table.pair_count[k] == 0) continue;
    const double m = model_gamma_at(spec, nugget, a, b, table.h_center[k]);
    const double d = m - table.gamma[k];
    r += d * d;
  }
  return r;
}

}  // namespace

void Observations::validate() const {
  const int n = static_cast<int>(sites.size());
  if (n == 0) throw SingularProblem("observations: no sites");
  if (values.size() != n) {
    throw DimensionMismatch("observations: " + std::to_string(n) +
                            " sites but " + std::to_string(values.size()) +
                            " values");
  }
  const auto dim = sites.front().size();
  for (const auto& s : sites) {
    if (s.size() != dim) {
      throw DimensionMismatch("observations: sites of mixed dimension");
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((sites[i] - sites[j]).lpNorm<Eigen::Infinity>() < kDuplicateTol) {
        throw SingularProblem("observations: duplicate sites at indices " +
                              std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
}

WeightSolution simple_krige(const CovModel& model, const Observations& obs,
                            const Eigen::VectorXd& target) {
  obs.validate();
  const Eigen::MatrixXd sigma = cov_matrix(model, obs);
  const Eigen::VectorXd c = cov_vector(model, obs, target);

  SymmetricSolver solver(sigma);
  WeightSolution out;
  out.weights = solver.solve(c);
  const int n = static_cast<int>(obs.sites.size());
  double mean_part = mean_at(obs, target);
  for (int i = 0; i < n; ++i) {
    mean_part -= out.weights(i) * mean_at(obs, obs.sites[i]);
  }
  out.intercept = mean_part;
  out.predictor = out.intercept + out.weights.dot(obs.values);
  out.error_variance = model(target, target) - out.weights.dot(sigma * out.weights);
  return out;
}

WeightSolution ordinary_krige(const VarioModel& vario, const Observations& obs,
                              const Eigen::VectorXd& target) {
  obs.validate();
  const int n = static_cast<int>(obs.sites.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 1, n + 1);
  Eigen::VectorXd rhs(n + 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double g = vario(obs.sites[i], obs.sites[j]);
      m(i, j) = g;
      m(j, i) = g;
    }
    m(i, n) = 1.0;
    m(n, i) = 1.0;
    rhs(i) = vario(obs.sites[i], target);
  }
  rhs(n) = 1.0;

  SymmetricSolver solver(m);
  const Eigen::VectorXd sol = solver.solve(rhs);

  WeightSolution out;
  out.weights = sol.head(n);
  out.lagrange = sol(n);
  out.predictor = out.weights.dot(obs.values);
  out.error_variance = out.weights.dot(rhs.head(n)) + *out.lagrange;
  return out;
}

WeightSolution ordinary_krige(const CovModel& model, const Observations& obs,
                              const Eigen::VectorXd& target) {
  obs.validate();
  if (!model.stationary()) {
    throw NotIsotropic("ordinary kriging in covariance form needs a stationary model");
  }
  const int n = static_cast<int>(obs.sites.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 1, n + 1);
  m.topLeftCorner(n, n) = cov_matrix(model, obs);
  for (int i = 0; i < n; ++i) {
    m(i, n) = 1.0;
    m(n, i) = 1.0;
  }
  Eigen::VectorXd rhs(n + 1);
  rhs.head(n) = cov_vector(model, obs, target);
  rhs(n) = 1.0;

  SymmetricSolver solver(m);
  const Eigen::VectorXd sol = solver.solve(rhs);

  WeightSolution out;
  out.weights = sol.head(n);
  out.lagrange = sol(n);
  out.predictor = out.weights.dot(obs.values);
  out.error_variance =
      model(target, target) - out.weights.dot(rhs.head(n)) - sol(n);
  return out;
}

double ordinary_krige_multiplier(const VarioModel& vario,
                                 const Observations& obs,
                                 const Eigen::VectorXd& target) {
  obs.validate();
  const int n = static_cast<int>(obs.sites.size());
  Eigen::MatrixXd gamma(n, n);
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = vario(obs.sites[i], obs.sites[j]);
      gamma(i, j) = v;
      gamma(j, i) = v;
    }
    g(i) = vario(obs.sites[i], target);
  }
  SymmetricSolver solver(gamma);
  const Eigen::VectorXd gi_g = solver.solve(g);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd gi_e = solver.solve(ones);
  const double denom = gi_e.sum();
  if (std::abs(denom) < 1e-300) {
    throw SingularSystem("ordinary kriging: e' Gamma^-1 e vanishes");
  }
  return -(1.0 - gi_g.sum()) / denom;
}

LagBins LagBins::regular(double max_lag, int count) {
  if (!(max_lag > 0.0) || count < 1) {
    throw ConfigError("lag bins need max_lag > 0 and count >= 1");
  }
  LagBins b;
  const double w = max_lag / count;
  for (int k = 0; k <= count; ++k) b.edges.push_back(w * k);
  return b;
}

VariogramEstimate matheron_estimate(const GridField& data, const LagBins& bins,
                                    const std::optional<DirectionSpec>& direction) {
  data.grid.validate();
  BinAccumulator acc(bins.count());
  const auto offsets = grid_offsets(data.grid, bins.edges.back());
  accumulate_grid(data, bins, direction, offsets, acc);
  return acc.finish(bins, direction);
}

VariogramEstimate matheron_estimate(const Observations& data, const LagBins& bins,
                                    const std::optional<DirectionSpec>& direction) {
  const int n = static_cast<int>(data.sites.size());
  if (data.values.size() != n) {
    throw DimensionMismatch("variogram: site/value count mismatch");
  }
  BinAccumulator acc(bins.count());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Eigen::VectorXd lag = data.sites[i] - data.sites[j];
      const double diff = data.values(i) - data.values(j);
      acc.add(bins, lag.norm(), lag, direction, diff * diff);
    }
  }
  return acc.finish(bins, direction);
}

VariogramEstimate matheron_pooled(const std::vector<GridField>& replicates,
                                  const LagBins& bins,
                                  const std::optional<DirectionSpec>& direction) {
  if (replicates.empty()) throw SingularProblem("variogram: no replicates");
  BinAccumulator acc(bins.count());
  const auto offsets = grid_offsets(replicates.front().grid, bins.edges.back());
  for (const auto& field : replicates) {
    if (field.grid.counts != replicates.front().grid.counts ||
        field.grid.spacing != replicates.front().grid.spacing) {
      throw DimensionMismatch("variogram: replicates on different grids");
    }
    accumulate_grid(field, bins, direction, offsets, acc);
  }
  return acc.finish(bins, direction);
}

VarioModel FitResult::model() const {
  return VarioModel::from_cov(fit_model(spec, a, b), nugget);
}

CovModel FitResult::cov_model() const {
  const CovModel base = fit_model(spec, a, b);
  return nugget > 0.0 ? base.with_nugget(nugget) : base;
}

FitResult fit_variogram(const VariogramEstimate& table, const FitSpec& spec,
                        std::optional<std::array<double, 3>> init,
                        std::uint64_t seed, int restarts) {
  std::size_t usable = 0;
  for (auto c : table.pair_count) usable += (c > 0);
  if (usable < 3) throw SingularProblem("variogram fit: fewer than 3 nonempty bins");

  // Default initial guess from the table itself: sill from the tail bins,
  // range from the first bin reaching half the sill.
  std::array<double, 3> start;
  if (init) {
    start = *init;
  } else {
    double sill = 0.0;
    int tail = 0;
    for (std::size_t k = table.h_center.size() / 2; k < table.h_center.size();
         ++k) {
      if (table.pair_count[k] == 0) continue;
      sill += table.gamma[k];
      ++tail;
    }
    sill = tail > 0 ? sill / tail : 1.0;
    if (!(sill > 0.0)) sill = 1.0;
    double half_range = table.h_center.back();
    for (std::size_t k = 0; k < table.h_center.size(); ++k) {
      if (table.pair_count[k] > 0 && table.gamma[k] >= 0.5 * sill) {
        half_range = table.h_center[k];
        break;
      }
    }
    start = {1e-3 * sill, 1.0 / std::max(half_range, 1e-6), sill};
  }

  const auto objective = [&](const Eigen::VectorXd& logp) {
    const double ng = spec.fit_nugget ? std::exp(logp(0)) : 0.0;
    return fit_residual(table, spec, ng, std::exp(logp(1)), std::exp(logp(2)));
  };

  const double floor = 1e-12;
  Eigen::VectorXd x0(3);
  x0 << std::log(std::max(start[0], floor)), std::log(std::max(start[1], floor)),
      std::log(std::max(start[2], floor));

  FitResult best;
  best.spec = spec;
  best.residual = std::numeric_limits<double>::infinity();

  Rng rng(Rng::mix(seed, 0xf17f17ull));
  for (int r = 0; r <= restarts; ++r) {
    Eigen::VectorXd xs = x0;
    if (r > 0) {
      for (int i = 0; i < 3; ++i) xs(i) += 0.5 * rng.normal();
    }
    const double f0 = objective(xs);
    int iters = 0;
    Eigen::VectorXd xb = xs;
    // Early exit: an initial guess that already matches the table to
    // round-off is the answer; polishing it just burns iterations.
    if (f0 >= 1e-24) {
      xb = detail::nelder_mead(objective, xs, 0.25, 400, 1e-14, &iters);
    }
    const double fb = objective(xb);
    if (fb < best.residual) {
      best.nugget = spec.fit_nugget ? std::exp(xb(0)) : 0.0;
      best.a = std::exp(xb(1));
      best.b = std::exp(xb(2));
      best.residual = fb;
      best.converged = true;
      best.iterations = iters;
    }
    if (best.residual < 1e-24) break;
  }
  return best;
}

namespace {

template <typename Factored>
KrigeGridResult krige_grid_impl(const GridSpec& targets, int jobs,
                                const Factored& solve_one) {
  targets.validate();
  KrigeGridResult out;
  out.prediction.grid = targets;
  out.error_variance.grid = targets;
  const std::size_t n = targets.size();
  out.prediction.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  out.error_variance.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  out.prediction.meta["kind"] = "kriging_prediction";
  out.error_variance.meta["kind"] = "kriging_error_variance";

  parallel_for(n, jobs, [&](std::size_t i) {
    const Eigen::VectorXd x = targets.site(i);
    const auto [pred, var] = solve_one(x);
    out.prediction.values[i] = pred;
    out.error_variance.values[i] = var;
  });
  return out;
}

}  // namespace

KrigeGridResult krige_grid(const CovModel& model, const Observations& obs,
                           const GridSpec& targets, int jobs) {
  obs.validate();
  const Eigen::MatrixXd sigma = cov_matrix(model, obs);
  const auto solver = std::make_shared<SymmetricSolver>(sigma);
  const int n = static_cast<int>(obs.sites.size());

  return krige_grid_impl(targets, jobs,
                         [&, solver](const Eigen::VectorXd& x) {
    const Eigen::VectorXd c = cov_vector(model, obs, x);
    const Eigen::VectorXd w = solver->solve(c);
    double pred = mean_at(obs, x);
    for (int i = 0; i < n; ++i) {
      pred += w(i) * (obs.values(i) - mean_at(obs, obs.sites[i]));
    }
    const double var = model(x, x) - w.dot(sigma * w);
    return std::pair<double, double>(pred, var);
  });
}

KrigeGridResult krige_grid(const VarioModel& vario, const Observations& obs,
                           const GridSpec& targets, int jobs) {
  obs.validate();
  const int n = static_cast<int>(obs.sites.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double g = vario(obs.sites[i], obs.sites[j]);
      m(i, j) = g;
      m(j, i) = g;
    }
    m(i, n) = 1.0;
    m(n, i) = 1.0;
  }
  const auto solver = std::make_shared<SymmetricSolver>(m);

  return krige_grid_impl(targets, jobs,
                         [&, solver](const Eigen::VectorXd& x) {
    Eigen::VectorXd rhs(n + 1);
    for (int i = 0; i < n; ++i) rhs(i) = vario(obs.sites[i], x);
    rhs(n) = 1.0;
    const Eigen::VectorXd sol = solver->solve(rhs);
    const double pred = sol.head(n).dot(obs.values);
    const double var = sol.head(n).dot(rhs.head(n)) + sol(n);
    return std::pair<double, double>(pred, var);
  });
}

}  // namespace stablefield
