#include "stablefield/stable.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stablefield {

namespace {

constexpr double kPi = 3.14159265358979323846;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  // Linear interpolation between order statistics.
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

double signed_power(double x, double p) {
  if (x == 0.0) return 0.0;
  return x > 0.0 ? std::pow(x, p) : -std::pow(-x, p);
}

StableParams::StableParams(double alpha_, double sigma_, double beta_,
                           double mu_)
    : alpha(alpha_), sigma(sigma_), beta(beta_), mu(mu_) {
  if (!(alpha > 0.0) || !(alpha <= 2.0))
    throw InvalidAlpha("stability index must lie in (0, 2]");
  if (!(sigma > 0.0))
    throw std::invalid_argument("scale parameter must be positive");
  if (!(beta >= -1.0 && beta <= 1.0))
    throw std::invalid_argument("skewness parameter must lie in [-1, 1]");
  if (alpha == 2.0) beta = 0.0;
}

std::complex<double> char_fn(const StableParams& p, double theta) {
  if (theta == 0.0) return {1.0, 0.0};
  const double at = std::abs(theta);
  const double sg = theta > 0.0 ? 1.0 : -1.0;
  double re, im;
  if (p.alpha == 1.0) {
    const double s = p.sigma * at;
    re = -s;
    im = -s * p.beta * (2.0 / kPi) * sg * std::log(at);
  } else {
    const double s = std::pow(p.sigma, p.alpha) * std::pow(at, p.alpha);
    re = -s;
    im = s * p.beta * sg * std::tan(kPi * p.alpha / 2.0);
  }
  im += p.mu * theta;
  return std::exp(std::complex<double>(re, im));
}

int SpectralMeasure::dim() const {
  return atoms.empty() ? static_cast<int>(shift.size())
                       : static_cast<int>(atoms.front().direction.size());
}

void SpectralMeasure::validate() const {
  const int n = dim();
  if (shift.size() != n)
    throw DimensionMismatch("shift dimension does not match atom directions");
  for (const auto& a : atoms) {
    if (a.direction.size() != n)
      throw DimensionMismatch("spectral atoms live on spheres of mixed dimension");
    if (std::abs(a.direction.norm() - 1.0) > 1e-12)
      throw std::invalid_argument("spectral atom direction is not unit norm");
    if (!(a.mass >= 0.0))
      throw std::invalid_argument("spectral atom mass must be nonnegative");
  }
}

std::complex<double> char_fn_vector(double alpha, const SpectralMeasure& gamma,
                                    const Eigen::VectorXd& theta) {
  if (!(alpha > 0.0 && alpha <= 2.0))
    throw InvalidAlpha("stability index must lie in (0, 2]");
  gamma.validate();
  if (theta.size() != gamma.dim())
    throw DimensionMismatch("argument dimension does not match the measure");

  double re = 0.0, im = 0.0;
  for (const auto& a : gamma.atoms) {
    const double t = theta.dot(a.direction);
    if (t == 0.0) continue;
    const double sg = t > 0.0 ? 1.0 : -1.0;
    const double at = std::abs(t);
    if (alpha == 2.0) {
      re -= t * t * a.mass;
    } else if (alpha == 1.0) {
      re -= at * a.mass;
      im -= at * a.mass * (2.0 / kPi) * sg * std::log(at);
    } else {
      const double pw = std::pow(at, alpha) * a.mass;
      re -= pw;
      im += pw * sg * std::tan(kPi * alpha / 2.0);
    }
  }
  im += theta.dot(gamma.shift);
  return std::exp(std::complex<double>(re, im));
}

Eigen::VectorXd gaussian_variances(const SpectralMeasure& gamma) {
  gamma.validate();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(gamma.dim());
  for (const auto& a : gamma.atoms)
    v += 2.0 * a.mass * a.direction.cwiseProduct(a.direction);
  return v;
}

double covariation_from_spectral(const SpectralMeasure& gamma, double alpha) {
  if (!(alpha > 1.0 && alpha <= 2.0))
    throw InvalidAlpha("covariation requires alpha in (1, 2]");
  gamma.validate();
  if (gamma.dim() != 2)
    throw DimensionMismatch("covariation needs a bivariate spectral measure");
  double acc = 0.0;
  for (const auto& a : gamma.atoms)
    acc += a.direction[0] * signed_power(a.direction[1], alpha - 1.0) * a.mass;
  return acc;
}

double ScalarSpectralMeasure::sigma_alpha() const {
  return mass_pos + mass_neg;
}

double ScalarSpectralMeasure::beta() const {
  const double tot = mass_pos + mass_neg;
  return tot > 0.0 ? (mass_pos - mass_neg) / tot : 0.0;
}

ScalarSpectralMeasure scalar_spectral_measure(const StableParams& p) {
  if (!(p.alpha < 2.0))
    throw InvalidAlpha("the spectral measure of a scalar law is unique only for alpha < 2");
  const double sa = std::pow(p.sigma, p.alpha);
  return {sa * (1.0 + p.beta) / 2.0, sa * (1.0 - p.beta) / 2.0};
}

double codifference(double sigma1, double sigma2, double sigma_diff,
                    double alpha) {
  return std::pow(sigma1, alpha) + std::pow(sigma2, alpha) -
         std::pow(sigma_diff, alpha);
}

double sample_standard(double alpha, double beta, Rng& rng) {
  if (alpha == 2.0) return std::sqrt(2.0) * rng.normal();

  const double u = rng.uniform_open();
  const double U = kPi * (u - 0.5);
  const double W = rng.exponential();

  if (alpha == 1.0) {
    const double h = kPi / 2.0 + beta * U;
    return (2.0 / kPi) *
           (h * std::tan(U) -
            beta * std::log((kPi / 2.0) * W * std::cos(U) / h));
  }

  const double ta = beta * std::tan(kPi * alpha / 2.0);
  const double B = std::atan(ta) / alpha;
  const double S = std::pow(1.0 + ta * ta, 1.0 / (2.0 * alpha));
  const double a_ub = alpha * (U + B);
  return S * std::sin(a_ub) / std::pow(std::cos(U), 1.0 / alpha) *
         std::pow(std::cos(U - a_ub) / W, (1.0 - alpha) / alpha);
}

double sample_one(const StableParams& p, Rng& rng) {
  const double x = sample_standard(p.alpha, p.beta, rng);
  if (p.alpha == 1.0) {
    // Scaling an alpha = 1 law shifts it: sigma X ~ S_1(sigma, beta, mu')
    // with mu' = -(2/pi) beta sigma log sigma.
    return p.sigma * x + (2.0 / kPi) * p.beta * p.sigma * std::log(p.sigma) +
           p.mu;
  }
  return p.sigma * x + p.mu;
}

SampleBatch sample(const StableParams& p, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  SampleBatch batch{p, seed, {}};
  batch.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) batch.values[i] = sample_one(p, rng);
  return batch;
}

double tail_index_estimate(const std::vector<double>& values) {
  if (values.size() < 1000)
    throw DegenerateSample("tail estimation needs at least 1000 samples");
  std::vector<double> abs(values.size());
  std::transform(values.begin(), values.end(), abs.begin(),
                 [](double v) { return std::abs(v); });
  std::sort(abs.begin(), abs.end());

  const double lo = quantile_sorted(abs, 0.99);
  const double hi = quantile_sorted(abs, 0.9999);
  if (!(lo > 0.0) || !(hi > lo * (1.0 + 1e-12)))
    throw DegenerateSample("sample has no usable upper tail");

  // Survival values at log-uniformly spaced thresholds; plain order
  // statistics would cluster all the weight at the lower band edge.
  const int nodes = 50;
  const double n = static_cast<double>(abs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (int i = 0; i < nodes; ++i) {
    const double x =
        lo * std::pow(hi / lo, static_cast<double>(i) / (nodes - 1));
    const auto it = std::upper_bound(abs.begin(), abs.end(), x);
    const double surv = static_cast<double>(abs.end() - it) / n;
    if (surv <= 0.0) continue;
    const double lx = std::log(x), ly = std::log(surv);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++used;
  }
  if (used < 2) throw DegenerateSample("not enough distinct tail thresholds");
  const double denom = used * sxx - sx * sx;
  if (denom == 0.0) throw DegenerateSample("tail thresholds are degenerate");
  const double slope = (used * sxy - sx * sy) / denom;
  return -slope;
}

MomentConstant moment_constant(double alpha, double beta, double p) {
  if (!(alpha > 0.0) || !(alpha <= 2.0))
    throw InvalidAlpha("stability index must lie in (0, 2]");
  if (!(p > 0.0) || !(p < alpha))
    throw InvalidMomentOrder("absolute moments exist only for 0 < p < alpha");
  if (alpha == 1.0 && beta != 0.0)
    throw UnsupportedSkew("the alpha = 1 constant is defined here only for beta = 0");

  constexpr std::size_t kDraws = 10'000'000;
  constexpr std::uint64_t kSeed = 0x0ddba11;
  Rng rng(kSeed);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < kDraws; ++i) {
    const double v = std::pow(std::abs(sample_standard(alpha, beta, rng)), p);
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double var_mean = m2 / static_cast<double>(kDraws - 1) /
                          static_cast<double>(kDraws);
  const double value = std::pow(mean, 1.0 / p);
  // Delta method for the p-th root.
  const double se = value * std::sqrt(var_mean) / (p * mean);
  return {value, se};
}

}  // namespace stablefield
