#include "stablefield/cov_models.hpp"

#include <cmath>

namespace stablefield {

double bessel_j(double nu, double r) {
  if (r < 0.0) throw std::invalid_argument("bessel_j requires r >= 0");
  return std::cyl_bessel_j(nu, r);
}

double bessel_k(double nu, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("bessel_k requires r > 0");
  return std::cyl_bessel_k(nu, r);
}

std::string family_name(CovFamily f) {
  switch (f) {
    case CovFamily::WhiteNoise: return "white_noise";
    case CovFamily::Bessel: return "bessel";
    case CovFamily::HoleEffect: return "hole_effect";
    case CovFamily::Cauchy: return "cauchy";
    case CovFamily::StableFamily: return "stable";
    case CovFamily::GaussianModel: return "gaussian";
    case CovFamily::WhittleMatern: return "whittle_matern";
    case CovFamily::Exponential: return "exponential";
    case CovFamily::Spherical: return "spherical";
    case CovFamily::FractionalBrownian: return "fractional_brownian";
    case CovFamily::Cyclone: return "cyclone";
    case CovFamily::CustomRadial: return "custom";
  }
  return "unknown";
}

struct CovModel::Impl {
  CovFamily family;
  int dim = 1;
  double a = 0.0;
  double b = 0.0;
  double nu = 0.0;
  double variance = 0.0;  // white noise
  double hurst = 0.0;     // fractional Brownian
  double nugget = 0.0;
  std::function<double(double)> profile;  // CustomRadial
  std::string label;
  std::optional<Eigen::MatrixXd> aniso;

  bool radial_family() const {
    switch (family) {
      case CovFamily::WhiteNoise:
      case CovFamily::FractionalBrownian:
      case CovFamily::Cyclone:
        return false;
      default:
        return true;
    }
  }

  // Isotropic profile at distance r > 0; r = 0 handled by callers.
  double radial_value(double r) const {
    switch (family) {
      case CovFamily::Bessel:
        return b * std::tgamma(nu + 1.0) * std::pow(2.0 / (a * r), nu) *
               bessel_j(nu, a * r);
      case CovFamily::HoleEffect:
        return b * std::sin(a * r) / (a * r);
      case CovFamily::Cauchy:
        return b / std::pow(1.0 + (a * r) * (a * r), nu);
      case CovFamily::StableFamily:
        return b * std::exp(-a * std::pow(r, nu));
      case CovFamily::GaussianModel:
        return b * std::exp(-a * r * r);
      case CovFamily::WhittleMatern: {
        const double x = a * r;
        if (x > 700.0) return 0.0;  // K_nu underflows well before this
        return b * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) *
               std::pow(x, nu) * bessel_k(nu, x);
      }
      case CovFamily::Exponential:
        return b * std::exp(-a * r);
      case CovFamily::Spherical: {
        if (r >= a) return 0.0;
        const double q = r / a;
        return b * (1.0 - 1.5 * q + 0.5 * q * q * q);
      }
      case CovFamily::CustomRadial:
        return profile(r);
      default:
        throw std::logic_error("family has no radial profile");
    }
  }

  double sill_value() const {
    switch (family) {
      case CovFamily::WhiteNoise: return variance;
      case CovFamily::Cyclone: return b;
      case CovFamily::CustomRadial: return profile(0.0);
      case CovFamily::FractionalBrownian:
        throw std::logic_error("nonstationary model has no sill");
      default: return b;
    }
  }
};

namespace {

bool same_site(const Eigen::VectorXd& s, const Eigen::VectorXd& t) {
  return s.size() == t.size() && s == t;
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
}

// Matern-type profile shared by the cyclone model, normalized to 1 at 0.
double matern_unit(double nu, double x) {
  if (x == 0.0) return 1.0;
  if (x > 700.0) return 0.0;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) *
         std::cyl_bessel_k(nu, x);
}

}  // namespace

std::shared_ptr<CovModel::Impl> CovModel::make_impl(CovFamily f, int dim) {
  auto impl = std::make_shared<Impl>();
  impl->family = f;
  impl->dim = dim;
  if (dim < 1) throw std::invalid_argument("dimension must be at least 1");
  return impl;
}

CovModel CovModel::white_noise(int dim, double variance) {
  auto impl = make_impl(CovFamily::WhiteNoise, dim);
  require_positive(variance, "variance");
  impl->variance = variance;
  return CovModel(impl);
}

CovModel CovModel::bessel(int dim, double a, double b, double nu) {
  auto impl = make_impl(CovFamily::Bessel, dim);
  require_positive(a, "a");
  require_positive(b, "b");
  require_positive(nu, "nu");
  if (nu < (dim - 2) / 2.0)
    throw std::invalid_argument("bessel family requires nu >= (d-2)/2");
  impl->a = a;
  impl->b = b;
  impl->nu = nu;
  return CovModel(impl);
}

CovModel CovModel::hole_effect(int dim, double a, double b) {
  if (dim > 3)
    throw std::invalid_argument("hole effect model is valid only up to dimension 3");
  auto impl = make_impl(CovFamily::HoleEffect, dim);
  require_positive(a, "a");
  require_positive(b, "b");
  impl->a = a;
  impl->b = b;
  return CovModel(impl);
}

CovModel CovModel::cauchy(int dim, double a, double b, double nu) {
  auto impl = make_impl(CovFamily::Cauchy, dim);
  require_positive(a, "a");
  require_positive(b, "b");
  require_positive(nu, "nu");
  impl->a = a;
  impl->b = b;
  impl->nu = nu;
  return CovModel(impl);
}

CovModel CovModel::stable_family(int dim, double a, double b, double nu) {
  auto impl = make_impl(CovFamily::StableFamily, dim);
  require_positive(a, "a");
  require_positive(b, "b");
  if (!(nu > 0.0 && nu <= 2.0))
    throw std::invalid_argument("stable family requires nu in (0, 2]");
  impl->a = a;
  impl->b = b;
  impl->nu = nu;
  return CovModel(impl);
}

CovModel CovModel::gaussian_model(int dim, double a, double b) {
  auto impl = make_impl(CovFamily::GaussianModel, dim);
  require_positive(a, "a");
  require_positive(b, "b");
  impl->a = a;
  impl->b = b;
  return CovModel(impl);
}

CovModel CovModel::whittle_matern(int dim, double a, double b, double nu) {
  auto impl = make_impl(CovFamily::WhittleMatern, dim);
  require_positive(a, "a");
  require_positive(b, "b");
  require_positive(nu, "nu");
  impl->a = a;
  impl->b = b;
  impl->nu = nu;
  return CovModel(impl);
}

CovModel CovModel::exponential(int dim, double a, double b) {
  auto impl = make_impl(CovFamily::Exponential, dim);
  require_positive(a, "a");
  require_positive(b, "b");
  impl->a = a;
  impl->b = b;
  return CovModel(impl);
}

CovModel CovModel::spherical(int dim, double a, double b) {
  if (dim > 3)
    throw std::invalid_argument("spherical model is valid only up to dimension 3");
  auto impl = make_impl(CovFamily::Spherical, dim);
  require_positive(a, "a");
  require_positive(b, "b");
  impl->a = a;
  impl->b = b;
  return CovModel(impl);
}

CovModel CovModel::fractional_brownian(int dim, double hurst) {
  auto impl = make_impl(CovFamily::FractionalBrownian, dim);
  if (!(hurst > 0.0 && hurst <= 1.0))
    throw std::invalid_argument("Hurst exponent must lie in (0, 1]");
  impl->hurst = hurst;
  return CovModel(impl);
}

CovModel CovModel::cyclone(double a, double b, double nu) {
  auto impl = make_impl(CovFamily::Cyclone, 3);
  require_positive(a, "a");
  require_positive(b, "b");
  require_positive(nu, "nu");
  impl->a = a;
  impl->b = b;
  impl->nu = nu;
  return CovModel(impl);
}

CovModel CovModel::radial(int dim, std::function<double(double)> profile,
                          std::string label) {
  auto impl = make_impl(CovFamily::CustomRadial, dim);
  if (!profile) throw std::invalid_argument("radial profile must be callable");
  impl->profile = std::move(profile);
  impl->label = std::move(label);
  return CovModel(impl);
}

CovModel CovModel::with_nugget(double variance) const {
  require_positive(variance, "nugget variance");
  auto impl = std::make_shared<Impl>(*impl_);
  impl->nugget += variance;
  return CovModel(impl);
}

CovModel CovModel::with_anisotropy(const Eigen::MatrixXd& q) const {
  if (!isotropic())
    throw NotIsotropic("geometric anisotropy needs an isotropic base model");
  if (q.rows() != impl_->dim || q.cols() != impl_->dim)
    throw DimensionMismatch("anisotropy matrix does not match model dimension");
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * q.cwiseAbs().maxCoeff())
    throw std::invalid_argument("anisotropy matrix must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("anisotropy matrix must be positive definite");
  auto impl = std::make_shared<Impl>(*impl_);
  impl->aniso = q;
  return CovModel(impl);
}

double CovModel::operator()(const Eigen::VectorXd& s,
                            const Eigen::VectorXd& t) const {
  const auto& im = *impl_;
  if (s.size() != im.dim || t.size() != im.dim)
    throw DimensionMismatch("site dimension does not match the model");

  const bool diag = same_site(s, t);
  double value = diag ? im.nugget : 0.0;

  switch (im.family) {
    case CovFamily::WhiteNoise:
      return value + (diag ? im.variance : 0.0);
    case CovFamily::FractionalBrownian: {
      const double h2 = 2.0 * im.hurst;
      return value + 0.5 * (std::pow(s.norm(), h2) + std::pow(t.norm(), h2) -
                            std::pow((s - t).norm(), h2));
    }
    case CovFamily::Cyclone: {
      const Eigen::Matrix3d sx =
          Eigen::Matrix3d::Identity() + s * s.transpose();
      const Eigen::Matrix3d sy =
          Eigen::Matrix3d::Identity() + t * t.transpose();
      const Eigen::Matrix3d sum = sx + sy;
      const Eigen::Vector3d h = s - t;
      const double qf = h.dot(sx * sum.inverse() * sy * h);
      const double pref = std::pow(2.0, 1.5) *
                          std::pow(sx.determinant() * sy.determinant(), 0.25) /
                          std::sqrt(sum.determinant());
      return value +
             pref * im.b * matern_unit(im.nu, im.a * std::sqrt(std::max(qf, 0.0)));
    }
    default: {
      const Eigen::VectorXd h = s - t;
      const double r =
          im.aniso ? std::sqrt(std::max(h.dot(*im.aniso * h), 0.0)) : h.norm();
      return value + (r == 0.0 ? im.sill_value() : im.radial_value(r));
    }
  }
}

double CovModel::at_lag(double r) const {
  if (!(isotropic() || impl_->family == CovFamily::WhiteNoise))
    throw NotIsotropic("at_lag is defined for stationary isotropic models only");
  if (r < 0.0) throw std::invalid_argument("lag distance must be nonnegative");
  if (r == 0.0) return impl_->nugget + impl_->sill_value();
  if (impl_->family == CovFamily::WhiteNoise) return 0.0;
  return impl_->radial_value(r);
}

double CovModel::variance_at(const Eigen::VectorXd& t) const {
  return (*this)(t, t);
}

bool CovModel::stationary() const {
  return impl_->family != CovFamily::FractionalBrownian &&
         impl_->family != CovFamily::Cyclone;
}

bool CovModel::isotropic() const {
  return impl_->radial_family() && !impl_->aniso.has_value();
}

int CovModel::dim() const { return impl_->dim; }
double CovModel::nugget() const { return impl_->nugget; }
CovFamily CovModel::family() const { return impl_->family; }

std::map<std::string, double> CovModel::params() const {
  std::map<std::string, double> out;
  const auto& im = *impl_;
  switch (im.family) {
    case CovFamily::WhiteNoise:
      out["variance"] = im.variance;
      break;
    case CovFamily::FractionalBrownian:
      out["hurst"] = im.hurst;
      break;
    case CovFamily::HoleEffect:
    case CovFamily::GaussianModel:
    case CovFamily::Exponential:
    case CovFamily::Spherical:
      out["a"] = im.a;
      out["b"] = im.b;
      break;
    case CovFamily::CustomRadial:
      break;
    default:
      out["a"] = im.a;
      out["b"] = im.b;
      out["nu"] = im.nu;
      break;
  }
  if (im.nugget > 0.0) out["nugget"] = im.nugget;
  return out;
}

const std::optional<Eigen::MatrixXd>& CovModel::anisotropy() const {
  return impl_->aniso;
}

Eigen::MatrixXd rotation_scaling_metric(double angle, double s1, double s2) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  Eigen::Matrix2d lambda = Eigen::Vector2d(s1, s2).asDiagonal();
  return r.transpose() * lambda * r;
}

struct VarioModel::Impl {
  enum class Kind { FromCov, Power, Sum } kind;
  int dim = 1;
  double nugget = 0.0;
  std::optional<CovModel> base;      // FromCov
  double coeff = 0.0, exponent = 0.0;  // Power
  std::vector<VarioModel> parts;     // Sum
  std::vector<int> axes;             // nonempty for zonal embeddings
  int inner_dim = 1;                 // dimension before embedding
};

VarioModel VarioModel::from_cov(const CovModel& c, double nugget) {
  if (nugget < 0.0) throw std::invalid_argument("nugget must be nonnegative");
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::FromCov;
  impl->dim = impl->inner_dim = c.dim();
  impl->nugget = nugget;
  impl->base = c;
  return VarioModel(impl);
}

VarioModel VarioModel::power(int dim, double coeff, double exponent) {
  if (dim < 1) throw std::invalid_argument("dimension must be at least 1");
  if (!(coeff > 0.0)) throw std::invalid_argument("coefficient must be positive");
  if (!(exponent > 0.0)) throw std::invalid_argument("exponent must be positive");
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::Power;
  impl->dim = impl->inner_dim = dim;
  impl->coeff = coeff;
  impl->exponent = exponent;
  return VarioModel(impl);
}

VarioModel VarioModel::sum(const std::vector<VarioModel>& parts) {
  if (parts.empty())
    throw EmptyComposite("variogram sum needs at least one component");
  const int d = parts.front().dim();
  for (const auto& p : parts)
    if (p.dim() != d)
      throw DimensionMismatch("variogram sum components disagree on dimension");
  auto impl = std::make_shared<Impl>();
  impl->kind = Impl::Kind::Sum;
  impl->dim = impl->inner_dim = d;
  impl->parts = parts;
  return VarioModel(impl);
}

VarioModel VarioModel::on_axes(int ambient_dim,
                               const std::vector<int>& axes) const {
  if (static_cast<int>(axes.size()) != dim())
    throw DimensionMismatch("axis list must match the model dimension");
  for (int a : axes)
    if (a < 0 || a >= ambient_dim)
      throw std::invalid_argument("axis index out of range");
  auto impl = std::make_shared<Impl>(*impl_);
  impl->inner_dim = dim();
  impl->dim = ambient_dim;
  impl->axes = axes;
  return VarioModel(impl);
}

double VarioModel::operator()(const Eigen::VectorXd& s,
                              const Eigen::VectorXd& t) const {
  const auto& im = *impl_;
  if (s.size() != im.dim || t.size() != im.dim)
    throw DimensionMismatch("site dimension does not match the variogram");

  Eigen::VectorXd ss = s, tt = t;
  if (!im.axes.empty()) {
    ss.resize(im.inner_dim);
    tt.resize(im.inner_dim);
    for (int i = 0; i < im.inner_dim; ++i) {
      ss[i] = s[im.axes[i]];
      tt[i] = t[im.axes[i]];
    }
  }

  switch (im.kind) {
    case Impl::Kind::FromCov: {
      if (same_site(ss, tt)) return 0.0;
      const CovModel& c = *im.base;
      return im.nugget +
             0.5 * (c.variance_at(ss) + c.variance_at(tt)) - c(ss, tt);
    }
    case Impl::Kind::Power:
      return im.coeff * std::pow((ss - tt).norm(), im.exponent);
    case Impl::Kind::Sum: {
      double acc = 0.0;
      for (const auto& p : im.parts) acc += p(ss, tt);
      return acc;
    }
  }
  return 0.0;
}

double VarioModel::at_lag(double r) const {
  if (r < 0.0) throw std::invalid_argument("lag distance must be nonnegative");
  Eigen::VectorXd s = Eigen::VectorXd::Zero(dim());
  Eigen::VectorXd t = Eigen::VectorXd::Zero(dim());
  t[0] = r;
  return (*this)(s, t);
}

int VarioModel::dim() const { return impl_->dim; }

double VarioModel::nugget() const {
  const auto& im = *impl_;
  switch (im.kind) {
    case Impl::Kind::FromCov:
      return im.nugget + im.base->nugget() +
             (im.base->family() == CovFamily::WhiteNoise
                  ? im.base->params().at("variance")
                  : 0.0);
    case Impl::Kind::Power:
      return 0.0;
    case Impl::Kind::Sum: {
      double acc = 0.0;
      for (const auto& p : im.parts) acc += p.nugget();
      return acc;
    }
  }
  return 0.0;
}

std::optional<double> VarioModel::sill() const {
  const auto& im = *impl_;
  switch (im.kind) {
    case Impl::Kind::FromCov: {
      if (!im.base->stationary()) return std::nullopt;
      Eigen::VectorXd origin = Eigen::VectorXd::Zero(im.base->dim());
      return im.nugget + im.base->variance_at(origin);
    }
    case Impl::Kind::Power:
      return std::nullopt;
    case Impl::Kind::Sum: {
      double acc = 0.0;
      for (const auto& p : im.parts) {
        auto s = p.sill();
        if (!s) return std::nullopt;
        acc += *s;
      }
      return acc;
    }
  }
  return std::nullopt;
}

namespace {

Eigen::MatrixXd gram_matrix(
    const std::vector<Eigen::VectorXd>& sites,
    const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>&
        fn) {
  const Eigen::Index n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      g(i, j) = g(j, i) = fn(sites[i], sites[j]);
    }
  }
  return g;
}

}  // namespace

DefinitenessReport psd_check(const CovModel& m,
                             const std::vector<Eigen::VectorXd>& sites) {
  if (sites.empty()) throw std::invalid_argument("psd_check needs sites");
  Eigen::MatrixXd g = gram_matrix(
      sites, [&](const Eigen::VectorXd& s, const Eigen::VectorXd& t) {
        return m(s, t);
      });
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  const double norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  const double thresh = 1e-8 * norm;
  return {min_eig >= -thresh, min_eig, thresh};
}

DefinitenessReport cnsd_check(const VarioModel& g,
                              const std::vector<Eigen::VectorXd>& sites) {
  if (sites.size() < 2) throw std::invalid_argument("cnsd_check needs >= 2 sites");
  const Eigen::Index n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd gm = gram_matrix(
      sites, [&](const Eigen::VectorXd& s, const Eigen::VectorXd& t) {
        return g(s, t);
      });
  const double norm_g =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gm).eigenvalues()
          .cwiseAbs()
          .maxCoeff();
  // Restrict to the zero-sum subspace: P gm P with P the centering projector;
  // the all-ones direction contributes an exact zero eigenvalue that does not
  // affect the test.
  Eigen::MatrixXd p =
      Eigen::MatrixXd::Identity(n, n) -
      Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::MatrixXd projected = p * gm * p;
  projected = 0.5 * (projected + projected.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(projected);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double thresh = 1e-8 * norm_g;
  return {max_eig <= thresh, max_eig, thresh};
}

}  // namespace stablefield
