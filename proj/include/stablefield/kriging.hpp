#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stablefield/cov_models.hpp"
#include "stablefield/grid.hpp"

// Linear prediction of second-order fields: simple and ordinary kriging,
// the empirical variogram, least-squares model fitting, and grid-wide
// prediction maps.

namespace stablefield {

struct Observations {
  std::vector<Eigen::VectorXd> sites;
  Eigen::VectorXd values;
  // Known mean function for simple kriging; empty means identically zero.
  std::function<double(const Eigen::VectorXd&)> mean_fn;

  void validate() const;  // consistent sizes, no duplicate sites
};

struct WeightSolution {
  Eigen::VectorXd weights;
  double intercept = 0.0;  // lambda_0 of the simple-kriging affine predictor
  std::optional<double> lagrange;  // ordinary-kriging multiplier
  double error_variance = 0.0;
  double predictor = 0.0;
};

// Simple kriging with known mean: solves Sigma lambda = sigma(target).
WeightSolution simple_krige(const CovModel& model, const Observations& obs,
                            const Eigen::VectorXd& target);

// Ordinary kriging (unknown constant mean), variogram form of the bordered
// system; error variance is sum_i lambda_i gamma(t_i, t) + mu.
WeightSolution ordinary_krige(const VarioModel& vario, const Observations& obs,
                              const Eigen::VectorXd& target);

// Ordinary kriging in covariance form (stationary models).
WeightSolution ordinary_krige(const CovModel& model, const Observations& obs,
                              const Eigen::VectorXd& target);

// Lagrange multiplier of the variogram-form system in closed form,
// mu = -(1 - e' G^-1 g) / (e' G^-1 e).
double ordinary_krige_multiplier(const VarioModel& vario,
                                 const Observations& obs,
                                 const Eigen::VectorXd& target);

struct LagBins {
  std::vector<double> edges;  // ascending; bin k is (edges[k], edges[k+1]]

  static LagBins regular(double max_lag, int count);
  int count() const { return static_cast<int>(edges.size()) - 1; }
  double center(int k) const { return 0.5 * (edges[k] + edges[k + 1]); }
};

struct DirectionSpec {
  Eigen::VectorXd direction;
  double tolerance_deg = 22.5;
  std::string label = "directional";
};

struct VariogramEstimate {
  std::vector<double> h_center;
  std::vector<double> gamma;  // NaN for empty bins
  std::vector<std::uint64_t> pair_count;
  std::string direction_label = "omnidirectional";

  bool empty_bin(int k) const { return pair_count[k] == 0; }
};

// Matheron estimator gamma(h) = sum (X_i - X_j)^2 / (2 N(h)) over site pairs
// binned by lag distance, optionally restricted to a direction cone.
VariogramEstimate matheron_estimate(
    const GridField& data, const LagBins& bins,
    const std::optional<DirectionSpec>& direction = std::nullopt);
VariogramEstimate matheron_estimate(
    const Observations& data, const LagBins& bins,
    const std::optional<DirectionSpec>& direction = std::nullopt);

// Pooled estimate over independent replicate fields; pairs are formed within
// each replicate only.
VariogramEstimate matheron_pooled(
    const std::vector<GridField>& replicates, const LagBins& bins,
    const std::optional<DirectionSpec>& direction = std::nullopt);

// Parametric family fitted to an empirical variogram table.
struct FitSpec {
  CovFamily family = CovFamily::Exponential;
  int dim = 2;
  double nu = 1.0;  // fixed shape parameter where the family has one
  bool fit_nugget = true;
};

struct FitResult {
  double nugget = 0.0;
  double a = 0.0;
  double b = 0.0;
  double residual = 0.0;
  bool converged = false;
  int iterations = 0;

  VarioModel model() const;
  CovModel cov_model() const;  // fitted family with the nugget attached
  FitSpec spec;
};

// Ordinary least squares over the nonempty bins, Nelder-Mead simplex on
// log-reparameterized (nugget, a, b) with deterministic random restarts.
FitResult fit_variogram(const VariogramEstimate& table, const FitSpec& spec,
                        std::optional<std::array<double, 3>> init = std::nullopt,
                        std::uint64_t seed = 0, int restarts = 5);

struct KrigeGridResult {
  GridField prediction;
  GridField error_variance;
};

KrigeGridResult krige_grid(const CovModel& model, const Observations& obs,
                           const GridSpec& targets, int jobs = 1);
KrigeGridResult krige_grid(const VarioModel& vario, const Observations& obs,
                           const GridSpec& targets, int jobs = 1);

}  // namespace stablefield
