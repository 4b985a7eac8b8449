#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <vector>

#include "stablefield/cov_models.hpp"
#include "stablefield/errors.hpp"
#include "stablefield/field_sim.hpp"
#include "stablefield/grid.hpp"
#include "stablefield/kriging.hpp"
#include "stablefield/linalg.hpp"
#include "stablefield/rng.hpp"

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

std::vector<Eigen::VectorXd> random_sites(int n, int dim, Rng& rng,
                                          double span = 4.0) {
  std::vector<Eigen::VectorXd> sites;
  sites.reserve(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd s(dim);
    for (int d = 0; d < dim; ++d) s(d) = rng.uniform(-span, span);
    sites.push_back(s);
  }
  return sites;
}

Observations random_obs(int n, int dim, Rng& rng) {
  Observations obs;
  obs.sites = random_sites(n, dim, rng);
  obs.values = Eigen::VectorXd(n);
  for (int i = 0; i < n; ++i) obs.values(i) = rng.normal();
  return obs;
}

Eigen::MatrixXd gram(const CovModel& model, const Observations& obs) {
  const int n = static_cast<int>(obs.sites.size());
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = model(obs.sites[i], obs.sites[j]);
  }
  return m;
}

Eigen::VectorXd cov_rhs(const CovModel& model, const Observations& obs,
                        const Eigen::VectorXd& target) {
  const int n = static_cast<int>(obs.sites.size());
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) c(i) = model(obs.sites[i], target);
  return c;
}

// iid draws on a line grid, for estimator tests that bypass the simulator.
GridField white_noise_line(std::int64_t n, std::uint64_t seed) {
  GridField f;
  f.grid.origin = vec1(0.0);
  f.grid.spacing = vec1(1.0);
  f.grid.counts = {n};
  f.seed = seed;
  Rng rng(seed);
  f.values = Eigen::VectorXd(n);
  for (std::int64_t i = 0; i < n; ++i) {
    f.values(static_cast<Eigen::Index>(i)) = rng.normal();
  }
  return f;
}

}  // namespace

TEST_CASE("simple kriging reproduces the data at observation sites") {
  Rng rng(901);
  const CovModel model = CovModel::whittle_matern(2, 1.3, 2.0, 1.5);
  const Observations obs = random_obs(6, 2, rng);
  for (int j = 0; j < 6; ++j) {
    const WeightSolution sol = simple_krige(model, obs, obs.sites[j]);
    for (int i = 0; i < 6; ++i) {
      CHECK(std::abs(sol.weights(i) - (i == j ? 1.0 : 0.0)) <= 1e-9);
    }
    CHECK(std::abs(sol.predictor - obs.values(j)) <= 1e-9);
    CHECK(std::abs(sol.error_variance) <= 1e-9);
  }
}

TEST_CASE("simple kriging with one site matches the regression coefficient") {
  const CovModel model = CovModel::exponential(1, 0.7, 1.9);
  Observations obs;
  obs.sites = {vec1(2.0)};
  obs.values = vec1(-1.4);
  obs.mean_fn = [](const Eigen::VectorXd& x) { return 0.5 + x(0); };

  const Eigen::VectorXd target = vec1(3.2);
  const WeightSolution sol = simple_krige(model, obs, target);

  const double rho = model(obs.sites[0], target) / model.at_lag(0.0);
  CHECK(sol.weights(0) == doctest::Approx(rho).epsilon(1e-12));
  const double m_t = 0.5 + 3.2;
  const double m_s = 0.5 + 2.0;
  CHECK(sol.predictor ==
        doctest::Approx(m_t + rho * (obs.values(0) - m_s)).epsilon(1e-12));
  CHECK(sol.error_variance ==
        doctest::Approx(model.at_lag(0.0) * (1.0 - rho * rho)).epsilon(1e-12));
}

TEST_CASE("simple kriging falls back to the mean far from the data") {
  const CovModel model = CovModel::exponential(1, 1.0, 1.0);
  Observations obs;
  obs.sites = {vec1(0.0), vec1(1.0)};
  obs.values = vec2(5.0, 5.0);
  obs.mean_fn = [](const Eigen::VectorXd&) { return 3.25; };

  const WeightSolution sol = simple_krige(model, obs, vec1(1.0e6));
  CHECK(std::abs(sol.predictor - 3.25) <= 1e-12);
  CHECK(sol.error_variance == doctest::Approx(model.at_lag(0.0)).epsilon(1e-12));
}

TEST_CASE("simple kriging never inflates the predictor variance") {
  Rng rng(404);
  const CovModel model = CovModel::whittle_matern(2, 2.0, 1.0, 1.0);
  const Observations obs = random_obs(8, 2, rng);
  const Eigen::MatrixXd sigma = gram(model, obs);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);

  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd target = vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const WeightSolution sol = simple_krige(model, obs, target);
    const Eigen::VectorXd c = cov_rhs(model, obs, target);
    const Eigen::VectorXd w = lu.solve(c);

    CHECK((sol.weights - w).lpNorm<Eigen::Infinity>() <= 1e-9);
    const double var_hat = sol.weights.dot(sigma * sol.weights);
    CHECK(var_hat <= model.at_lag(0.0) + 1e-10);
    const double mse = model.at_lag(0.0) - 2.0 * sol.weights.dot(c) + var_hat;
    CHECK(std::abs(sol.error_variance - mse) <= 1e-9);
  }
}

TEST_CASE("simple kriging error is uncorrelated with every observation") {
  Rng rng(911);
  const CovModel model = CovModel::cauchy(2, 1.0, 1.0, 0.8);
  const Observations obs = random_obs(7, 2, rng);
  const Eigen::MatrixXd sigma = gram(model, obs);

  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd target = vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const WeightSolution sol = simple_krige(model, obs, target);
    // cov(Xhat - X, X(t_i)) is the i-th residual of the kriging system.
    const Eigen::VectorXd resid =
        sigma * sol.weights - cov_rhs(model, obs, target);
    CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("observations are validated before solving") {
  const CovModel model = CovModel::exponential(1, 1.0, 1.0);

  Observations empty;
  CHECK_THROWS_AS(simple_krige(model, empty, vec1(0.0)), SingularProblem);

  Observations dup;
  dup.sites = {vec1(1.0), vec1(1.0)};
  dup.values = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(simple_krige(model, dup, vec1(0.0)), SingularProblem);

  Observations mixed;
  mixed.sites = {vec1(1.0), vec2(0.0, 1.0)};
  mixed.values = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(mixed.validate(), DimensionMismatch);

  Observations short_values;
  short_values.sites = {vec1(0.0), vec1(1.0)};
  short_values.values = vec1(0.0);
  CHECK_THROWS_AS(short_values.validate(), DimensionMismatch);
}

TEST_CASE("ordinary kriging reproduces the data with a vanishing multiplier") {
  Rng rng(777);
  const VarioModel vario = VarioModel::from_cov(CovModel::exponential(2, 0.9, 1.4));
  const Observations obs = random_obs(5, 2, rng);
  for (int j = 0; j < 5; ++j) {
    const WeightSolution sol = ordinary_krige(vario, obs, obs.sites[j]);
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(sol.weights(i) - (i == j ? 1.0 : 0.0)) <= 1e-9);
    }
    REQUIRE(sol.lagrange.has_value());
    CHECK(std::abs(*sol.lagrange) <= 1e-9);
    CHECK(std::abs(sol.error_variance) <= 1e-9);
    CHECK(std::abs(sol.predictor - obs.values(j)) <= 1e-9);
  }
}

TEST_CASE("ordinary kriging weights sum to one") {
  Rng rng(31);
  const VarioModel vario =
      VarioModel::from_cov(CovModel::whittle_matern(2, 1.0, 1.0, 0.75), 0.2);
  for (int k = 0; k < 10; ++k) {
    const Observations obs = random_obs(3 + static_cast<int>(rng.below(6)), 2, rng);
    const Eigen::VectorXd target = vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const WeightSolution sol = ordinary_krige(vario, obs, target);
    CHECK(std::abs(sol.weights.sum() - 1.0) <= 1e-10);
  }
}

TEST_CASE("midpoint between two symmetric sites gets equal weights") {
  const VarioModel vario = VarioModel::from_cov(CovModel::exponential(1, 1.0, 1.0));
  Observations obs;
  obs.sites = {vec1(-1.0), vec1(1.0)};
  obs.values = vec2(2.0, 4.0);
  const WeightSolution sol = ordinary_krige(vario, obs, vec1(0.0));
  CHECK(sol.weights(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sol.weights(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sol.predictor == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("ordinary kriging multiplier matches its closed form") {
  Rng rng(2718);
  const VarioModel vario =
      VarioModel::from_cov(CovModel::exponential(2, 0.8, 1.0), 0.1);
  for (int k = 0; k < 20; ++k) {
    const int n = 2 + static_cast<int>(rng.below(7));
    const Observations obs = random_obs(n, 2, rng);
    const Eigen::VectorXd target = vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));

    Eigen::MatrixXd g(n, n);
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) g(i, j) = vario(obs.sites[i], obs.sites[j]);
      rhs(i) = vario(obs.sites[i], target);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
    const Eigen::VectorXd gi_rhs = lu.solve(rhs);
    const Eigen::VectorXd gi_ones = lu.solve(Eigen::VectorXd::Ones(n));
    const double direct = -(1.0 - gi_rhs.sum()) / gi_ones.sum();

    CHECK(std::abs(ordinary_krige_multiplier(vario, obs, target) - direct) <= 1e-9);
    const WeightSolution sol = ordinary_krige(vario, obs, target);
    REQUIRE(sol.lagrange.has_value());
    CHECK(std::abs(*sol.lagrange - direct) <= 1e-9);
  }
}

TEST_CASE("covariance and variogram forms of ordinary kriging agree") {
  Rng rng(555);
  const CovModel model = CovModel::gaussian_model(2, 0.4, 1.2);
  const VarioModel vario = VarioModel::from_cov(model);
  const Observations obs = random_obs(6, 2, rng);
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd target = vec2(rng.uniform(-4, 4), rng.uniform(-4, 4));
    const WeightSolution a = ordinary_krige(model, obs, target);
    const WeightSolution b = ordinary_krige(vario, obs, target);
    CHECK((a.weights - b.weights).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(std::abs(a.predictor - b.predictor) <= 1e-9);
    CHECK(std::abs(a.error_variance - b.error_variance) <= 1e-9);
    REQUIRE(a.lagrange.has_value());
    REQUIRE(b.lagrange.has_value());
    // The two systems carry the multiplier with opposite signs.
    CHECK(std::abs(*a.lagrange + *b.lagrange) <= 1e-9);
  }
}

TEST_CASE("ordinary kriging error covariance with the data is the multiplier") {
  // For weights a_i summing to one, cov(Xhat - X, sum_i a_i X(t_i)) does not
  // depend on the a_i: every observation has the same error covariance, equal
  // to the variogram-form multiplier. Differences of two such combinations
  // are therefore uncorrelated with the error, which is the projection
  // optimality of the predictor over the affine span of the data.
  Rng rng(808);
  const CovModel model = CovModel::exponential(2, 0.6, 1.0);
  const VarioModel vario = VarioModel::from_cov(model);
  const Observations obs = random_obs(5, 2, rng);
  const Eigen::MatrixXd sigma = gram(model, obs);

  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd target = vec2(rng.uniform(-4, 4), rng.uniform(-4, 4));
    const WeightSolution sol = ordinary_krige(vario, obs, target);
    REQUIRE(sol.lagrange.has_value());
    const Eigen::VectorXd err_cov =
        sigma * sol.weights - cov_rhs(model, obs, target);

    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd a(5);
      for (int i = 0; i < 5; ++i) a(i) = rng.uniform_open();
      a /= a.sum();
      CHECK(std::abs(a.dot(err_cov) - *sol.lagrange) <= 1e-9);
    }
  }
}

TEST_CASE("ordinary kriging in covariance form needs a stationary model") {
  const CovModel fbf = CovModel::fractional_brownian(1, 0.5);
  Observations obs;
  obs.sites = {vec1(1.0), vec1(2.0)};
  obs.values = vec2(0.0, 1.0);
  CHECK_THROWS_AS(ordinary_krige(fbf, obs, vec1(1.5)), NotIsotropic);
}

TEST_CASE("lag bins reject degenerate layouts") {
  CHECK_THROWS_AS(LagBins::regular(0.0, 4), ConfigError);
  CHECK_THROWS_AS(LagBins::regular(2.0, 0), ConfigError);
}

TEST_CASE("matheron estimate of white noise is flat at the marginal variance") {
  const GridField field = white_noise_line(10000, 2026);
  const LagBins bins = LagBins::regular(10.5, 10);
  const VariogramEstimate est = matheron_estimate(field, bins);
  REQUIRE(est.h_center.size() == 10);
  for (std::size_t k = 0; k < est.h_center.size(); ++k) {
    CHECK_FALSE(est.empty_bin(k));
    CHECK(est.pair_count[k] >= 9990 - 10 * static_cast<long long>(k));
    CHECK(std::abs(est.gamma[k] - 1.0) <= 0.05);
  }
}

TEST_CASE("matheron estimate of a constant field vanishes") {
  GridField field = white_noise_line(500, 1);
  field.values.setConstant(3.7);
  const VariogramEstimate est = matheron_estimate(field, LagBins::regular(5.0, 5));
  for (std::size_t k = 0; k < est.gamma.size(); ++k) {
    if (!est.empty_bin(k)) CHECK(std::abs(est.gamma[k]) <= 1e-15);
  }
}

TEST_CASE("grid and scattered-site estimators agree on the same data") {
  GridField field;
  field.grid.origin = vec2(0.0, 0.0);
  field.grid.spacing = vec2(0.5, 0.5);
  field.grid.counts = {5, 5};
  Rng rng(606);
  field.values = Eigen::VectorXd(25);
  for (int i = 0; i < 25; ++i) field.values(i) = rng.normal();

  Observations obs;
  obs.values = field.values;
  for (std::size_t i = 0; i < field.grid.size(); ++i) {
    obs.sites.push_back(field.grid.site(i));
  }

  const LagBins bins = LagBins::regular(2.5, 5);
  const VariogramEstimate a = matheron_estimate(field, bins);
  const VariogramEstimate b = matheron_estimate(obs, bins);
  REQUIRE(a.gamma.size() == b.gamma.size());
  for (std::size_t k = 0; k < a.gamma.size(); ++k) {
    CHECK(a.pair_count[k] == b.pair_count[k]);
    if (!a.empty_bin(k)) {
      CHECK(a.gamma[k] == doctest::Approx(b.gamma[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("out-of-reach bins are reported empty") {
  Observations obs;
  obs.sites = {vec1(0.0), vec1(1.0)};
  obs.values = vec2(0.0, 2.0);
  const VariogramEstimate est = matheron_estimate(obs, LagBins::regular(3.0, 3));
  CHECK_FALSE(est.empty_bin(0));
  CHECK(est.pair_count[0] == 1);
  CHECK(est.gamma[0] == doctest::Approx(2.0).epsilon(1e-14));
  for (std::size_t k = 1; k < 3; ++k) {
    CHECK(est.empty_bin(k));
    CHECK(est.pair_count[k] == 0);
    CHECK(std::isnan(est.gamma[k]));
  }
}

TEST_CASE("directional estimates of an isotropic field stay close") {
  const CovModel model = CovModel::exponential(2, 2.0, 1.0);
  GridSpec grid;
  grid.origin = vec2(0.0, 0.0);
  grid.spacing = vec2(0.5, 0.5);
  grid.counts = {40, 40};

  std::vector<GridField> fields;
  for (std::uint64_t seed : {501, 502, 503, 504}) {
    fields.push_back(gaussian_sim(model, grid, seed));
  }

  DirectionSpec along_x;
  along_x.direction = vec2(1.0, 0.0);
  along_x.label = "x";
  DirectionSpec along_y;
  along_y.direction = vec2(0.0, 1.0);
  along_y.label = "y";

  const LagBins bins = LagBins::regular(2.0, 4);
  const VariogramEstimate gx = matheron_pooled(fields, bins, along_x);
  const VariogramEstimate gy = matheron_pooled(fields, bins, along_y);
  CHECK(gx.direction_label == "x");
  CHECK(gy.direction_label == "y");

  for (std::size_t k = 0; k < bins.count(); ++k) {
    REQUIRE_FALSE(gx.empty_bin(k));
    REQUIRE_FALSE(gy.empty_bin(k));
    const double rel = std::abs(gx.gamma[k] - gy.gamma[k]) /
                       std::max(gx.gamma[k], gy.gamma[k]);
    CHECK(rel < 0.15);
  }
}

TEST_CASE("pooled replicates accumulate every pair") {
  std::vector<GridField> fields = {white_noise_line(200, 5),
                                   white_noise_line(200, 6)};
  const LagBins bins = LagBins::regular(4.0, 4);
  const VariogramEstimate pooled = matheron_pooled(fields, bins);
  const VariogramEstimate one = matheron_estimate(fields[0], bins);
  for (std::size_t k = 0; k < bins.count(); ++k) {
    CHECK(pooled.pair_count[k] == 2 * one.pair_count[k]);
  }

  CHECK_THROWS_AS(matheron_pooled({}, bins), SingularProblem);
  std::vector<GridField> mismatched = {white_noise_line(200, 5),
                                       white_noise_line(100, 6)};
  CHECK_THROWS_AS(matheron_pooled(mismatched, bins), DimensionMismatch);
}

TEST_CASE("pooled matheron estimate tracks the model variogram") {
  const CovModel model = CovModel::exponential(2, 1.0, 1.0);
  GridSpec grid;
  grid.origin = vec2(0.0, 0.0);
  grid.spacing = vec2(0.25, 0.25);
  grid.counts = {32, 32};

  // One factorization serves every replicate; only the draws differ.
  const Eigen::Index n = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd sigma(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = model(grid.site(static_cast<std::size_t>(i)),
                             grid.site(static_cast<std::size_t>(j)));
      sigma(i, j) = v;
      sigma(j, i) = v;
    }
  }
  const Eigen::MatrixXd chol = Eigen::MatrixXd(jittered_llt(sigma).matrixL());

  std::vector<GridField> fields;
  for (int s = 0; s < 20; ++s) {
    Rng rng(static_cast<std::uint64_t>(9100 + s));
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
    GridField f;
    f.grid = grid;
    f.values = chol * z;
    f.seed = static_cast<std::uint64_t>(9100 + s);
    fields.push_back(std::move(f));
  }

  const LagBins bins = LagBins::regular(2.0, 8);
  const VariogramEstimate est = matheron_pooled(fields, bins);
  const VarioModel truth = VarioModel::from_cov(model);
  for (std::size_t k = 0; k < bins.count(); ++k) {
    if (est.pair_count[k] < 500) continue;
    const double g = truth(vec2(est.h_center[k], 0.0), vec2(0.0, 0.0));
    CHECK(est.gamma[k] == doctest::Approx(g).epsilon(0.10));
  }
}

TEST_CASE("variogram fit recovers noiseless exponential parameters") {
  const double nugget = 0.5, a = 2.0, b = 1.0;
  VariogramEstimate table;
  for (int k = 1; k <= 15; ++k) {
    const double h = 0.2 * k;
    table.h_center.push_back(h);
    table.gamma.push_back(nugget + b * (1.0 - std::exp(-a * h)));
    table.pair_count.push_back(1000);
  }

  FitSpec spec;
  spec.family = CovFamily::Exponential;
  spec.dim = 2;

  const FitResult fit = fit_variogram(table, spec);
  CHECK(fit.converged);
  CHECK(fit.nugget == doctest::Approx(nugget).epsilon(0.01));
  CHECK(fit.a == doctest::Approx(a).epsilon(0.01));
  CHECK(fit.b == doctest::Approx(b).epsilon(0.01));

  // Starting at the answer should end the search immediately.
  const FitResult warm = fit_variogram(table, spec, {{nugget, a, b}});
  CHECK(warm.converged);
  CHECK(warm.iterations == 0);
  CHECK(warm.nugget == doctest::Approx(nugget).epsilon(1e-9));
  CHECK(warm.a == doctest::Approx(a).epsilon(1e-9));
  CHECK(warm.b == doctest::Approx(b).epsilon(1e-9));

  // The fitted model objects carry the recovered parameters.
  const VarioModel vm = fit.model();
  CHECK(vm(vec2(0.3, 0.0), vec2(0.0, 0.0)) ==
        doctest::Approx(nugget + b * (1.0 - std::exp(-a * 0.3))).epsilon(0.02));
  CHECK(fit.cov_model().nugget() == doctest::Approx(nugget).epsilon(0.01));
}

TEST_CASE("variogram fit rejects unusable inputs") {
  VariogramEstimate thin;
  thin.h_center = {0.5, 1.0};
  thin.gamma = {0.3, 0.5};
  thin.pair_count = {10, 10};
  FitSpec spec;
  CHECK_THROWS_AS(fit_variogram(thin, spec), SingularProblem);

  VariogramEstimate table;
  for (int k = 1; k <= 5; ++k) {
    table.h_center.push_back(0.5 * k);
    table.gamma.push_back(1.0 - std::exp(-0.5 * k));
    table.pair_count.push_back(10);
  }
  FitSpec bad;
  bad.family = CovFamily::FractionalBrownian;
  CHECK_THROWS_AS(fit_variogram(table, bad), ConfigError);
}

TEST_CASE("kriged grids interpolate the observations exactly") {
  const CovModel model = CovModel::exponential(1, 1.0, 1.0);
  Observations obs;
  obs.sites = {vec1(0.5), vec1(1.5), vec1(2.5)};
  obs.values = Eigen::VectorXd(3);
  obs.values << 1.0, -2.0, 0.5;

  GridSpec grid;
  grid.origin = vec1(0.0);
  grid.spacing = vec1(0.25);
  grid.counts = {13};

  const VarioModel vario = VarioModel::from_cov(model);
  const KrigeGridResult simple = krige_grid(model, obs, grid);
  const KrigeGridResult ordinary = krige_grid(vario, obs, grid);
  REQUIRE(simple.prediction.values.size() == 13);
  REQUIRE(ordinary.prediction.values.size() == 13);

  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = grid.site(i);
    for (int j = 0; j < 3; ++j) {
      if ((x - obs.sites[j]).norm() < 1e-12) {
        CHECK(std::abs(simple.prediction.values[i] - obs.values(j)) <= 1e-9);
        CHECK(std::abs(simple.error_variance.values[i]) <= 1e-9);
        CHECK(std::abs(ordinary.prediction.values[i] - obs.values(j)) <= 1e-9);
        CHECK(std::abs(ordinary.error_variance.values[i]) <= 1e-9);
      }
    }
    // Each node must match the one-target solvers.
    CHECK(std::abs(simple.prediction.values[i] -
                   simple_krige(model, obs, x).predictor) <= 1e-10);
    CHECK(std::abs(ordinary.prediction.values[i] -
                   ordinary_krige(vario, obs, x).predictor) <= 1e-10);
  }
}

TEST_CASE("kriging an empty grid produces an empty field") {
  const CovModel model = CovModel::exponential(1, 1.0, 1.0);
  Observations obs;
  obs.sites = {vec1(0.0), vec1(1.0)};
  obs.values = vec2(1.0, 2.0);

  GridSpec grid;
  grid.origin = vec1(0.0);
  grid.spacing = vec1(1.0);
  grid.counts = {0};

  const KrigeGridResult out = krige_grid(model, obs, grid);
  CHECK(out.prediction.values.size() == 0);
  CHECK(out.error_variance.values.size() == 0);
}

TEST_CASE("kriged grids are identical across worker counts") {
  Rng rng(2222);
  const CovModel model = CovModel::whittle_matern(2, 1.0, 1.0, 1.5);
  const Observations obs = random_obs(9, 2, rng);

  GridSpec grid;
  grid.origin = vec2(-2.0, -2.0);
  grid.spacing = vec2(0.25, 0.25);
  grid.counts = {17, 17};

  const KrigeGridResult one = krige_grid(model, obs, grid, 1);
  const KrigeGridResult four = krige_grid(model, obs, grid, 4);
  REQUIRE(one.prediction.values.size() == four.prediction.values.size());
  CHECK(std::memcmp(one.prediction.values.data(), four.prediction.values.data(),
                    sizeof(double) * one.prediction.values.size()) == 0);
  CHECK(std::memcmp(one.error_variance.values.data(),
                    four.error_variance.values.data(),
                    sizeof(double) * one.error_variance.values.size()) == 0);
}

TEST_CASE("refining the target grid shrinks the largest jump") {
  const CovModel model = CovModel::exponential(1, 1.0, 1.0);
  Observations obs;
  obs.sites = {vec1(0.3), vec1(1.1), vec1(2.2), vec1(2.9)};
  obs.values = Eigen::VectorXd(4);
  obs.values << 1.0, -1.0, 2.0, 0.0;

  const auto max_jump = [&](double spacing, std::int64_t n) {
    GridSpec grid;
    grid.origin = vec1(0.0);
    grid.spacing = vec1(spacing);
    grid.counts = {n};
    const KrigeGridResult out = krige_grid(model, obs, grid);
    double worst = 0.0;
    for (Eigen::Index i = 0; i + 1 < out.prediction.values.size(); ++i) {
      worst = std::max(worst, std::abs(out.prediction.values[i + 1] -
                                       out.prediction.values[i]));
    }
    return worst;
  };

  const double coarse = max_jump(0.1, 31);
  const double fine = max_jump(0.05, 61);
  CHECK(fine < coarse);
  CHECK(fine > 0.0);
}
