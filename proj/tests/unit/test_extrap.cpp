#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <vector>

#include "stablefield/cov_models.hpp"
#include "stablefield/errors.hpp"
#include "stablefield/extrap.hpp"
#include "stablefield/grid.hpp"
#include "stablefield/kriging.hpp"
#include "stablefield/measure.hpp"
#include "stablefield/rng.hpp"
#include "stablefield/stable.hpp"

using namespace stablefield;

namespace {

Eigen::VectorXd vec1(double x) {
  Eigen::VectorXd v(1);
  v << x;
  return v;
}

Eigen::VectorXd vec2(double x, double y) {
  Eigen::VectorXd v(2);
  v << x, y;
  return v;
}

Eigen::VectorXd weights1(double w) { return vec1(w); }

// Unit-height window (site + 1/4, site + 3/4); overlapping windows make the
// error scale of X(t) - lambda X(t + 1/4) piecewise explicit.
KernelFamily sliding_window() {
  return KernelFamily(
      [](const Eigen::VectorXd& site, const Eigen::VectorXd& x) {
        return (x(0) > site(0) + 0.25 && x(0) < site(0) + 0.75) ? 1.0 : 0.0;
      },
      "sliding-window");
}

IntegralField window_field(double alpha, double lo, double hi, int cells) {
  return IntegralField(sliding_window(),
                       MeasureSpace::box_midpoint(vec1(lo), vec1(hi), {cells}),
                       alpha);
}

IntegralField ma_field(double alpha, double lo, double hi, int cells) {
  return IntegralField(KernelFamily::moving_average(bisquare_kernel(1)),
                       MeasureSpace::box_midpoint(vec1(lo), vec1(hi), {cells}),
                       alpha);
}

double window_h_alpha(double alpha, double lambda) {
  return 0.25 * (1.0 + std::pow(std::abs(1.0 - lambda), alpha) +
                 std::pow(std::abs(lambda), alpha));
}

}  // namespace

TEST_CASE("window problem reproduces the explicit error-scale landscape") {
  const double alpha = 1.5;
  const IntegralField field = window_field(alpha, 0.0, 1.0, 4000);
  const std::vector<Eigen::VectorXd> sites = {vec1(0.25)};
  const ExtrapProblem problem =
      ExtrapProblem::from_field(field, sites, vec1(0.0));

  for (double lambda : {-1.0, -0.3, 0.0, 0.25, 0.5, 1.0, 1.7, 2.0}) {
    const double h = problem.error_scale(weights1(lambda));
    CHECK(std::pow(h, alpha) ==
          doctest::Approx(window_h_alpha(alpha, lambda)).epsilon(1e-6));
    // The free-standing combination scale must see the same quantity.
    const double free_h =
        combo_scale(field, vec1(0.0), sites, weights1(lambda));
    CHECK(free_h == doctest::Approx(h).epsilon(1e-12));
  }
}

TEST_CASE("least-scale weights land in the window problem's interior minimum") {
  const IntegralField field = window_field(1.5, 0.0, 1.0, 4000);
  const ExtrapProblem problem =
      ExtrapProblem::from_field(field, {vec1(0.25)}, vec1(0.0));

  const ExtrapSolution sol = lsl_solve(problem);
  CHECK(sol.converged);
  CHECK(std::abs(sol.weights(0) - 0.5) <= 1e-4);
  CHECK(sol.objective ==
        doctest::Approx(std::pow(window_h_alpha(1.5, 0.5), 1.0 / 1.5))
            .epsilon(1e-6));
}

TEST_CASE("every method returns the coordinate vector at a knot") {
  const std::vector<Eigen::VectorXd> sites = {vec1(0.0), vec1(0.35), vec1(0.7)};

  const IntegralField mid = window_field(1.5, 0.0, 2.0, 4000);
  const IntegralField low = window_field(0.8, 0.0, 2.0, 4000);
  const IntegralField one = window_field(1.0, 0.0, 2.0, 4000);

  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(3);
    delta(k) = 1.0;

    const ExtrapProblem pm = ExtrapProblem::from_field(mid, sites, sites[k]);
    CHECK((lsl_solve(pm).weights - delta).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK((col_solve(pm).weights - delta).lpNorm<Eigen::Infinity>() <= 1e-9);

    const ExtrapSolution mcl = mcl_solve(pm);
    CHECK((mcl.weights - delta).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK(mcl.multiplier == doctest::Approx(-1.0 / 1.5).epsilon(1e-4));

    const ExtrapProblem pl = ExtrapProblem::from_field(low, sites, sites[k]);
    CHECK((best_lsl_solve(pl).weights - delta).lpNorm<Eigen::Infinity>() <=
          1e-9);

    const ExtrapProblem po = ExtrapProblem::from_field(one, sites, sites[k]);
    CHECK((iclsl_solve(po).weights - delta).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("sub-Gaussian problems collapse to kriging for every index") {
  Rng rng(640);
  const CovModel model = CovModel::whittle_matern(2, 1.5, 1.0, 1.0);
  std::vector<Eigen::VectorXd> sites;
  for (int i = 0; i < 5; ++i) {
    sites.push_back(vec2(rng.uniform(-2, 2), rng.uniform(-2, 2)));
  }
  const Eigen::VectorXd target = vec2(0.4, -0.3);

  Observations obs;
  obs.sites = sites;
  obs.values = Eigen::VectorXd::Zero(5);
  const Eigen::VectorXd krig = simple_krige(model, obs, target).weights;

  for (double alpha : {0.8, 1.2, 1.7, 2.0}) {
    const ExtrapProblem problem =
        ExtrapProblem::sub_gaussian(model, alpha, sites, target);
    const ExtrapSolution lsl = lsl_solve(problem);
    const ExtrapSolution col = col_solve(problem);
    CHECK((lsl.weights - krig).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK((col.weights - krig).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("covariation orthogonality on an exponential-memory field keeps only the newest site") {
  const double lambda = 0.5;
  const double alpha = 1.6;
  const std::vector<Eigen::VectorXd> sites = {vec1(-1.2), vec1(-0.3), vec1(0.6),
                                              vec1(1.5)};
  const Eigen::VectorXd target = vec1(2.5);

  const IntegralField field(
      KernelFamily::ou(lambda),
      MeasureSpace::box_midpoint(vec1(-41.2), vec1(2.5), {10000}), alpha);
  const ExtrapProblem problem = ExtrapProblem::from_field(field, sites, target);
  const ExtrapSolution sol = col_solve(problem);

  REQUIRE(sol.weights.size() == 4);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(sol.weights(i)) <= 1e-6);
  CHECK(sol.weights(3) ==
        doctest::Approx(std::exp(-lambda * (2.5 - 1.5))).epsilon(1e-6));
}

TEST_CASE("covariation maximization preserves the target scale") {
  const IntegralField field = ma_field(1.5, -3.0, 3.0, 3000);
  const std::vector<Eigen::VectorXd> sites = {vec1(-0.4), vec1(0.3), vec1(1.0)};
  const ExtrapProblem problem =
      ExtrapProblem::from_field(field, sites, vec1(0.55));

  const ExtrapSolution sol = mcl_solve(problem);
  CHECK(sol.converged);
  CHECK(sol.kkt_residual <= 1e-6);
  CHECK(problem.combo_scale(sol.weights) ==
        doctest::Approx(problem.target_scale()).epsilon(1e-8));
}

TEST_CASE("covariation maximization with one site normalizes the scales") {
  // The site kernel is twice the target kernel's bump, so the optimal
  // combination halves the site variable to match the target scale.
  KernelFamily family(
      [](const Eigen::VectorXd& site, const Eigen::VectorXd& x) {
        const double d = x(0) - site(0);
        const double bump = std::abs(d) < 1.0 ? (1.0 - d * d) * (1.0 - d * d) : 0.0;
        return site(0) == 0.0 ? 2.0 * bump : bump;
      },
      "scaled-bump");
  const IntegralField field(
      family, MeasureSpace::box_midpoint(vec1(-2.5), vec1(2.5), {2500}), 1.5);

  const ExtrapProblem problem =
      ExtrapProblem::from_field(field, {vec1(0.0)}, vec1(0.4));
  const ExtrapSolution sol = mcl_solve(problem);
  CHECK(sol.weights(0) == doctest::Approx(0.5).epsilon(1e-6));

  // Disjoint supports leave nothing to maximize.
  const ExtrapProblem apart =
      ExtrapProblem::from_field(field, {vec1(0.0)}, vec1(10.0));
  CHECK_THROWS_AS(mcl_solve(apart), ZeroCovariationVector);
}

TEST_CASE("covariation maximization moves continuously with the target") {
  const IntegralField field = ma_field(1.4, -3.0, 3.5, 3000);
  const std::vector<Eigen::VectorXd> sites = {vec1(0.0), vec1(1.0)};

  Eigen::VectorXd prev;
  for (int k = 0; k <= 8; ++k) {
    const double t = 0.2 + 0.05 * k;
    const ExtrapProblem problem =
        ExtrapProblem::from_field(field, sites, vec1(t));
    const Eigen::VectorXd w = mcl_solve(problem).weights;
    if (k > 0) CHECK((w - prev).lpNorm<Eigen::Infinity>() <= 0.15);
    prev = w;
  }
}

TEST_CASE("tie-broken selection prefers weight on the near site") {
  // Below and at index one the window problem minimizes the error scale on
  // {0, 1} (respectively [0, 1]); the selection rule must pick lambda = 1.
  for (double alpha : {0.7, 1.0}) {
    const IntegralField field = window_field(alpha, 0.0, 1.0, 4000);
    const ExtrapProblem problem =
        ExtrapProblem::from_field(field, {vec1(0.25)}, vec1(0.0));
    const ExtrapSolution sol = best_lsl_solve(problem);
    CHECK(std::abs(sol.weights(0) - 1.0) <= 1e-3);
    CHECK(std::pow(sol.objective, alpha) ==
          doctest::Approx(window_h_alpha(alpha, 1.0)).epsilon(1e-3));
  }
}

TEST_CASE("an offset interval flips the selected endpoint") {
  // f_t covers (min(t1,t2), max(t1,t2)); shifting the target window by delta
  // moves the unique minimizer from one endpoint to the other.
  KernelFamily intervals(
      [](const Eigen::VectorXd& site, const Eigen::VectorXd& x) {
        const double lo = std::min(site(0), site(1));
        const double hi = std::max(site(0), site(1));
        return (x(0) > lo && x(0) < hi) ? 1.0 : 0.0;
      },
      "interval");

  for (double delta : {0.1, -0.1}) {
    const IntegralField field(
        intervals, MeasureSpace::box_midpoint(vec1(-1.0), vec1(3.0), {4000}),
        0.7);
    const std::vector<Eigen::VectorXd> sites = {vec2(0.0, 1.0)};
    const Eigen::VectorXd target = vec2(0.5 + delta, 1.5 + delta);
    const ExtrapProblem problem =
        ExtrapProblem::from_field(field, sites, target);
    const ExtrapSolution sol = best_lsl_solve(problem);
    const double expected = delta > 0.0 ? 0.0 : 1.0;
    CHECK(std::abs(sol.weights(0) - expected) <= 1e-3);
  }
}

TEST_CASE("tie-broken selection is exact and reproducible") {
  const IntegralField field = window_field(0.8, 0.0, 2.0, 2000);
  const std::vector<Eigen::VectorXd> sites = {vec1(0.0), vec1(0.5)};

  // At a knot the result is the exact coordinate vector.
  const ExtrapProblem at_knot =
      ExtrapProblem::from_field(field, sites, sites[1]);
  const Eigen::VectorXd w = best_lsl_solve(at_knot).weights;
  CHECK(std::abs(w(0)) <= 1e-12);
  CHECK(std::abs(w(1) - 1.0) <= 1e-12);

  // Away from the knots the annealing path is deterministically seeded.
  const ExtrapProblem generic =
      ExtrapProblem::from_field(field, sites, vec1(0.2));
  AnnealConfig config;
  config.starts = 8;
  config.proposals = 3000;
  config.max_quad_nodes = 512;
  const Eigen::VectorXd a = best_lsl_solve(generic, config).weights;
  const Eigen::VectorXd b = best_lsl_solve(generic, config).weights;
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("index continuation settles on the midpoint of the minimizer set") {
  const IntegralField field = window_field(1.0, 0.0, 1.0, 4000);
  const ExtrapProblem problem =
      ExtrapProblem::from_field(field, {vec1(0.25)}, vec1(0.0));

  const ExtrapSolution sol = iclsl_solve(problem);
  CHECK(sol.converged);
  // Every index above one has the symmetric minimizer 1/2, so the limit
  // keeps it; the tie-broken selection would sit at 1 instead.
  CHECK(std::abs(sol.weights(0) - 0.5) <= 1e-4);
  CHECK(std::abs(best_lsl_solve(problem).weights(0) - sol.weights(0)) > 0.4);
}

TEST_CASE("index continuation steps shrink as the index approaches one") {
  const IntegralField field = ma_field(1.0, -3.0, 4.0, 2500);
  const std::vector<Eigen::VectorXd> sites = {vec1(-0.5), vec1(0.4), vec1(1.2)};
  const ExtrapProblem problem =
      ExtrapProblem::from_field(field, sites, vec1(0.8));

  const ExtrapSolution sol = iclsl_solve(problem);
  REQUIRE(sol.step_history.size() >= 6);
  const std::size_t m = sol.step_history.size();
  for (std::size_t k = m - 5; k < m; ++k) {
    CHECK(sol.step_history[k] <= sol.step_history[k - 1] + 1e-12);
  }
}

TEST_CASE("least-scale minimizers above index one do not depend on the start") {
  Rng rng(1234);
  for (int rep = 0; rep < 20; ++rep) {
    const double alpha = 1.1 + 0.9 * rng.uniform();
    const IntegralField field = ma_field(alpha, -4.0, 4.0, 800);
    std::vector<Eigen::VectorXd> sites;
    for (int i = 0; i < 3; ++i) sites.push_back(vec1(rng.uniform(-2, 2)));
    // Keep the kernels distinct; near-coincident sites are rejected anyway.
    bool ok = true;
    for (int i = 0; i < 3 && ok; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        if (std::abs(sites[i](0) - sites[j](0)) < 0.05) ok = false;
      }
    }
    if (!ok) continue;
    const ExtrapProblem problem =
        ExtrapProblem::from_field(field, sites, vec1(rng.uniform(-2, 2)));

    LslConfig from_zero;
    from_zero.init = Eigen::VectorXd::Zero(3);
    LslConfig from_ones;
    from_ones.init = Eigen::VectorXd::Constant(3, 0.7);
    const Eigen::VectorXd a = lsl_solve(problem, from_zero).weights;
    const Eigen::VectorXd b = lsl_solve(problem, from_ones).weights;
    CHECK((a - b).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("mixed-moment covariation estimates match closed forms") {
  const double alpha = 1.5;
  const double p = 1.2;

  // A variable against itself reports its own scale to the alpha.
  const double sigma = 1.3;
  const SampleBatch self = sample(StableParams(alpha, sigma, 0.0, 0.0), 100000, 91);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
      self.values.data(), static_cast<Eigen::Index>(self.values.size()));
  const double kappa_self =
      covariation_mixed_moment_estimate(x, x, alpha, p, sigma);
  CHECK(kappa_self == doctest::Approx(std::pow(sigma, alpha)).epsilon(0.05));

  // Independent variables are uncorrelated in the covariation sense too.
  const SampleBatch left = sample(StableParams(alpha, 1.0, 0.0, 0.0), 100000, 92);
  const SampleBatch right = sample(StableParams(alpha, 1.0, 0.0, 0.0), 100000, 93);
  Eigen::VectorXd x1 = Eigen::Map<const Eigen::VectorXd>(
      left.values.data(), static_cast<Eigen::Index>(left.values.size()));
  Eigen::VectorXd x2 = Eigen::Map<const Eigen::VectorXd>(
      right.values.data(), static_cast<Eigen::Index>(right.values.size()));
  const double kappa_indep =
      covariation_mixed_moment_estimate(x1, x2, alpha, p, 1.0);

  // Standard error of the mixed-moment numerator, mapped through the scaling.
  const Eigen::VectorXd prod =
      x1.array() * x2.array().sign() * x2.array().abs().pow(p - 1.0);
  const double denom = x2.array().abs().pow(p).mean();
  const double se = std::sqrt((prod.array() - prod.mean()).square().mean() /
                              static_cast<double>(prod.size())) /
                    denom;
  CHECK(std::abs(kappa_indep) <= 3.0 * se);

  // A sub-Gaussian pair has covariation rho when both components have
  // Gaussian variance two.
  const double rho = 0.6;
  const std::size_t n = 100000;
  const double cos_factor =
      std::pow(std::cos(M_PI * alpha / 4.0), 2.0 / alpha);
  const SampleBatch subord =
      sample(StableParams(alpha / 2.0, cos_factor, 1.0, 0.0), n, 94);
  Rng rng(95);
  Eigen::VectorXd y1(static_cast<Eigen::Index>(n)), y2(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double g1 = rng.normal();
    const double g2 = rho * g1 + std::sqrt(1.0 - rho * rho) * rng.normal();
    const double root = std::sqrt(subord.values[i] * 2.0);
    y1(static_cast<Eigen::Index>(i)) = root * g1;
    y2(static_cast<Eigen::Index>(i)) = root * g2;
  }
  const double kappa_pair =
      covariation_mixed_moment_estimate(y1, y2, alpha, p, 1.0);
  CHECK(kappa_pair == doctest::Approx(rho).epsilon(0.05));
}

TEST_CASE("error reports tabulate the prediction moments over probe sites") {
  const IntegralField field = window_field(1.5, 0.0, 2.0, 2000);
  const std::vector<Eigen::VectorXd> sites = {vec1(0.0), vec1(0.4)};
  const Eigen::VectorXd target = vec1(0.2);
  const ExtrapProblem problem = ExtrapProblem::from_field(field, sites, target);
  const ExtrapSolution sol = lsl_solve(problem);

  // Probing the knots re-solves to exact interpolation: zero error scale.
  const ErrorReport at_knots = error_report(problem, sol, sites, 1.2);
  REQUIRE(at_knots.rows.size() == 2);
  for (const auto& row : at_knots.rows) {
    CHECK(std::abs(row.error_scale) <= 1e-8);
    CHECK(std::abs(row.moment_scale) <= 1e-6);
  }

  // A single probe at the target reports that target's moment norm.
  const ErrorReport at_target = error_report(problem, sol, {target}, 1.2);
  REQUIRE(at_target.rows.size() == 1);
  CHECK(at_target.moment_factor > 0.0);
  CHECK(at_target.rows[0].error_scale ==
        doctest::Approx(sol.objective).epsilon(1e-6));
  CHECK(at_target.rows[0].moment_scale ==
        doctest::Approx(at_target.moment_factor * sol.objective).epsilon(1e-6));
  CHECK(at_target.sup_moment_scale ==
        doctest::Approx(at_target.rows[0].moment_scale).epsilon(1e-12));

  // Moment orders at or above the index have no finite moment.
  CHECK_THROWS_AS(error_report(problem, sol, {target}, 1.6), InvalidMomentOrder);
}

TEST_CASE("grid extrapolation matches the one-target solver for any job count") {
  const IntegralField field = window_field(1.5, 0.0, 2.0, 2000);
  const std::vector<Eigen::VectorXd> sites = {vec1(0.0), vec1(0.4)};
  const ExtrapProblem base = ExtrapProblem::from_field(field, sites, vec1(0.0));

  Eigen::VectorXd site_values(2);
  site_values << 1.0, -0.5;

  GridSpec targets;
  targets.origin = vec1(0.0);
  targets.spacing = vec1(0.1);
  targets.counts = {9};

  const ExtrapGridResult one =
      extrap_grid(base, site_values, ExtrapMethod::Lsl, targets, {}, 1);
  const ExtrapGridResult four =
      extrap_grid(base, site_values, ExtrapMethod::Lsl, targets, {}, 4);

  REQUIRE(one.prediction.values.size() == 9);
  CHECK(std::memcmp(one.prediction.values.data(), four.prediction.values.data(),
                    sizeof(double) * 9) == 0);
  CHECK(std::memcmp(one.weights.data(), four.weights.data(),
                    sizeof(double) * one.weights.size()) == 0);

  for (int i = 0; i < 9; ++i) {
    const Eigen::VectorXd t = targets.site(static_cast<std::size_t>(i));
    const ExtrapSolution direct = lsl_solve(base.with_target(t));
    CHECK((one.weights.row(i).transpose() - direct.weights)
              .lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(one.prediction.values[i] ==
          doctest::Approx(direct.weights.dot(site_values)).epsilon(1e-9));
    CHECK(one.objectives[static_cast<std::size_t>(i)] ==
          doctest::Approx(direct.objective).epsilon(1e-9));
  }

  // The knot at 0.4 sits on the grid, so its row is a coordinate vector.
  CHECK(std::abs(one.weights(4, 1) - 1.0) <= 1e-6);
  CHECK(std::abs(one.prediction.values[4] - (-0.5)) <= 1e-6);
}

TEST_CASE("method names round-trip") {
  for (ExtrapMethod m : {ExtrapMethod::Lsl, ExtrapMethod::Col, ExtrapMethod::Mcl,
                         ExtrapMethod::BestLsl, ExtrapMethod::Iclsl}) {
    CHECK(method_from_name(method_name(m)) == m);
  }
  CHECK(method_from_name("best_lsl") == ExtrapMethod::BestLsl);
  CHECK_THROWS_AS(method_from_name("ols"), ConfigError);
}
