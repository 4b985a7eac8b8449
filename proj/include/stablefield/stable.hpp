#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

#include "stablefield/errors.hpp"
#include "stablefield/rng.hpp"

// Univariate and multivariate alpha-stable laws: characteristic functions,
// spectral measures, exact simulation, and the sample-based diagnostics
// (tail index, absolute-moment constants).

namespace stablefield {

// sign(x) * |x|^p, with 0 mapped to 0.
double signed_power(double x, double p);

// Parameters of S_alpha(sigma, beta, mu). At alpha = 2 the law is
// N(mu, 2 sigma^2) and beta is meaningless; it is normalized to 0.
struct StableParams {
  double alpha;
  double sigma;
  double beta;
  double mu;

  StableParams(double alpha, double sigma, double beta, double mu);
  bool is_gaussian() const { return alpha == 2.0; }
};

std::complex<double> char_fn(const StableParams& p, double theta);

// One atom of a finite measure on the unit sphere.
struct SpectralAtom {
  Eigen::VectorXd direction;
  double mass;
};

// Finite spectral measure plus shift vector; together they determine the
// law of an alpha-stable random vector.
struct SpectralMeasure {
  std::vector<SpectralAtom> atoms;
  Eigen::VectorXd shift;

  int dim() const;
  void validate() const;
};

std::complex<double> char_fn_vector(double alpha, const SpectralMeasure& gamma,
                                    const Eigen::VectorXd& theta);

// Component variances in the alpha = 2 case: Var X_i = 2 int s_i^2 Gamma(ds).
Eigen::VectorXd gaussian_variances(const SpectralMeasure& gamma);

// Covariation [X_1, X_2]_alpha of a 2-dimensional stable vector read off its
// spectral measure. Defined only for alpha > 1.
double covariation_from_spectral(const SpectralMeasure& gamma, double alpha);

// Spectral measure on {-1,+1} of a scalar law with alpha in (0,2):
// Gamma({+1}) = sigma^alpha (1+beta)/2, Gamma({-1}) = sigma^alpha (1-beta)/2.
struct ScalarSpectralMeasure {
  double mass_pos;
  double mass_neg;

  double sigma_alpha() const;  // total mass, equal to sigma^alpha
  double beta() const;
};
ScalarSpectralMeasure scalar_spectral_measure(const StableParams& p);

// Codifference from the three scale parameters involved,
// tau = sigma_1^alpha + sigma_2^alpha - sigma_diff^alpha.
double codifference(double sigma1, double sigma2, double sigma_diff,
                    double alpha);

// One draw of S_alpha(1, beta, 0) advancing the supplied generator
// (Chambers-Mallows-Stuck; alpha = 1 and alpha = 2 take their own branches).
double sample_standard(double alpha, double beta, Rng& rng);

// One draw of the full law, including the alpha = 1 scale-shift correction.
double sample_one(const StableParams& p, Rng& rng);

struct SampleBatch {
  StableParams params;
  std::uint64_t seed;
  std::vector<double> values;
};

SampleBatch sample(const StableParams& p, std::size_t n, std::uint64_t seed);

// Tail exponent fitted by least squares on the log-log empirical survival
// function, using the band between the 99.0th and 99.99th percentiles of |X|.
double tail_index_estimate(const std::vector<double>& values);

struct MomentConstant {
  double value;
  double std_error;
};

// c_{alpha,beta}(p) = (E |xi|^p)^{1/p} for xi ~ S_alpha(1, beta, 0), so that
// (E |X|^p)^{1/p} = c_{alpha,beta}(p) * sigma. Monte-Carlo with a fixed
// internal seed; requires 0 < p < alpha, and beta = 0 when alpha = 1.
MomentConstant moment_constant(double alpha, double beta, double p);

}  // namespace stablefield
