#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stablefield/errors.hpp"

// Covariance and variogram models: the standard isotropic families, the
// nonstationary examples (fractional Brownian, cyclone), geometric
// anisotropy, nugget effects, zonal composition, and empirical
// positive/negative-definiteness checks.

namespace stablefield {

// Cylindrical Bessel functions J_nu and K_nu (r >= 0; K requires r > 0).
double bessel_j(double nu, double r);
double bessel_k(double nu, double r);

enum class CovFamily {
  WhiteNoise,
  Bessel,
  HoleEffect,
  Cauchy,
  StableFamily,
  GaussianModel,
  WhittleMatern,
  Exponential,
  Spherical,
  FractionalBrownian,
  Cyclone,
  CustomRadial,
};

std::string family_name(CovFamily f);

class CovModel {
 public:
  static CovModel white_noise(int dim, double variance);
  // Normalized so that C(0) = b for every family below.
  static CovModel bessel(int dim, double a, double b, double nu);
  static CovModel hole_effect(int dim, double a, double b);
  static CovModel cauchy(int dim, double a, double b, double nu);
  static CovModel stable_family(int dim, double a, double b, double nu);
  static CovModel gaussian_model(int dim, double a, double b);
  static CovModel whittle_matern(int dim, double a, double b, double nu);
  static CovModel exponential(int dim, double a, double b);
  static CovModel spherical(int dim, double a, double b);
  static CovModel fractional_brownian(int dim, double hurst);
  static CovModel cyclone(double a, double b, double nu);
  // Arbitrary radial profile; used for checking candidate functions that are
  // not known to be valid covariances.
  static CovModel radial(int dim, std::function<double(double)> profile,
                         std::string label = "custom");

  // Same model plus a white-noise component of the given variance.
  CovModel with_nugget(double variance) const;

  // Geometric anisotropy: the lag metric becomes sqrt(h' Q h) for an SPD Q.
  // Only defined for stationary isotropic bases.
  CovModel with_anisotropy(const Eigen::MatrixXd& q) const;

  double operator()(const Eigen::VectorXd& s, const Eigen::VectorXd& t) const;
  // Isotropic stationary profile at lag distance r (without anisotropy this
  // is C(h) for any ||h|| = r); includes the nugget only at r = 0.
  double at_lag(double r) const;

  double variance_at(const Eigen::VectorXd& t) const;
  bool stationary() const;
  bool isotropic() const;
  int dim() const;
  double nugget() const;
  CovFamily family() const;
  // Named parameters (a, b, nu, variance, hurst as applicable).
  std::map<std::string, double> params() const;
  const std::optional<Eigen::MatrixXd>& anisotropy() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  explicit CovModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  static std::shared_ptr<Impl> make_impl(CovFamily f, int dim);
};

// 2-d rotate-then-scale lag metric R' diag(s1, s2) R for use with
// CovModel::with_anisotropy.
Eigen::MatrixXd rotation_scaling_metric(double angle, double s1, double s2);

class VarioModel {
 public:
  // gamma(s,t) = 1(s != t) * (nugget + (C(s,s)+C(t,t))/2 - C(s,t)).
  static VarioModel from_cov(const CovModel& c, double nugget = 0.0);
  // gamma(h) = coeff * ||h||^exponent (the valid range is exponent in (0,2),
  // but invalid exponents are constructible so they can be tested).
  static VarioModel power(int dim, double coeff, double exponent);
  static VarioModel sum(const std::vector<VarioModel>& parts);
  // Zonal embedding: evaluate this model on the listed coordinate axes of an
  // ambient_dim-dimensional lag.
  VarioModel on_axes(int ambient_dim, const std::vector<int>& axes) const;

  double operator()(const Eigen::VectorXd& s, const Eigen::VectorXd& t) const;
  double at_lag(double r) const;

  int dim() const;
  double nugget() const;
  std::optional<double> sill() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  explicit VarioModel(std::shared_ptr<const Impl> impl)
      : impl_(std::move(impl)) {}
};

struct DefinitenessReport {
  bool ok;
  double extreme_eigenvalue;  // min for psd_check, max for cnsd_check
  double threshold;           // 1e-8 * spectral norm of the tested matrix
};

// Positive semidefiniteness of the covariance Gram matrix on the sites.
DefinitenessReport psd_check(const CovModel& m,
                             const std::vector<Eigen::VectorXd>& sites);

// Conditional negative semidefiniteness of the variogram matrix: eigenvalues
// are examined on the zero-sum subspace only.
DefinitenessReport cnsd_check(const VarioModel& g,
                              const std::vector<Eigen::VectorXd>& sites);

}  // namespace stablefield
