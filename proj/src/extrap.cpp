#include "stablefield/extrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <utility>

#include "optim_detail.hpp"
#include "stablefield/errors.hpp"
#include "stablefield/linalg.hpp"
#include "stablefield/parallel.hpp"
#include "stablefield/stable.hpp"

namespace stablefield {

namespace {

constexpr double kDuplicateTol = 1e-12;
constexpr double kTiny = 1e-300;

void check_sites(const std::vector<Eigen::VectorXd>& sites,
                 const Eigen::VectorXd& target) {
  if (sites.empty()) throw SingularProblem("extrapolation: no sites");
  const auto dim = sites.front().size();
  for (const auto& s : sites) {
    if (s.size() != dim) {
      throw DimensionMismatch("extrapolation: sites of mixed dimension");
    }
  }
  if (target.size() != dim) {
    throw DimensionMismatch("extrapolation: target dimension " +
                            std::to_string(target.size()) + " vs site dimension " +
                            std::to_string(dim));
  }
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (std::size_t j = i + 1; j < sites.size(); ++j) {
      if ((sites[i] - sites[j]).lpNorm<Eigen::Infinity>() < kDuplicateTol) {
        throw SingularProblem("extrapolation: duplicate sites at indices " +
                              std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
}

// Symmetric solve with eigenvalue clipping; always defined, used for solver
// seeds where an exact inverse is not required.
Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& sym,
                           const Eigen::VectorXd& rhs) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cap = ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv(ev.size());
  for (int i = 0; i < ev.size(); ++i) {
    inv(i) = std::abs(ev(i)) > 1e-13 * std::max(cap, kTiny) ? 1.0 / ev(i) : 0.0;
  }
  return es.eigenvectors() * inv.asDiagonal() *
         es.eigenvectors().transpose() * rhs;
}

double power_sum(const Eigen::VectorXd& r, const Eigen::VectorXd& m,
                 double index) {
  double s = 0.0;
  for (int j = 0; j < r.size(); ++j) s += std::pow(std::abs(r(j)), index) * m(j);
  return s;
}

double sub_gaussian_kappa(double alpha, double cov, double var_second) {
  if (var_second <= 0.0) return 0.0;
  return std::pow(2.0, -0.5 * alpha) * cov *
         std::pow(var_second, 0.5 * (alpha - 2.0));
}

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) < b(i);
  }
  return false;
}

}  // namespace

std::string method_name(ExtrapMethod method) {
  switch (method) {
    case ExtrapMethod::Lsl:
      return "lsl";
    case ExtrapMethod::Col:
      return "col";
    case ExtrapMethod::Mcl:
      return "mcl";
    case ExtrapMethod::BestLsl:
      return "best-lsl";
    case ExtrapMethod::Iclsl:
      return "iclsl";
  }
  return "unknown";
}

ExtrapMethod method_from_name(const std::string& name) {
  if (name == "lsl") return ExtrapMethod::Lsl;
  if (name == "col") return ExtrapMethod::Col;
  if (name == "mcl") return ExtrapMethod::Mcl;
  if (name == "best-lsl" || name == "best_lsl") return ExtrapMethod::BestLsl;
  if (name == "iclsl") return ExtrapMethod::Iclsl;
  throw ConfigError("unknown extrapolation method '" + name +
                    "' (expected lsl, col, mcl, best-lsl or iclsl)");
}

ExtrapProblem ExtrapProblem::from_field(const IntegralField& field,
                                        const std::vector<Eigen::VectorXd>& sites,
                                        const Eigen::VectorXd& target) {
  check_sites(sites, target);
  ExtrapProblem p;
  p.kind_ = Kind::Integral;
  p.alpha_ = field.alpha();
  p.sites_ = sites;
  p.target_ = target;
  p.field_ = std::make_shared<IntegralField>(field);
  p.masses_ = field.space().weights();
  const int n = static_cast<int>(sites.size());
  const auto nodes = static_cast<Eigen::Index>(field.space().size());
  p.kernels_.resize(n, nodes);
  for (int i = 0; i < n; ++i) {
    p.kernels_.row(i) = field.kernel_vector(sites[i])->transpose();
  }
  p.refresh_target();
  return p;
}

ExtrapProblem ExtrapProblem::from_covariation(
    std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> kappa,
    double alpha, const std::vector<Eigen::VectorXd>& sites,
    const Eigen::VectorXd& target) {
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw InvalidAlpha("covariation-handle problems need alpha in (1,2], got " +
                       std::to_string(alpha));
  }
  if (!kappa) throw ConfigError("covariation handle is empty");
  check_sites(sites, target);
  ExtrapProblem p;
  p.kind_ = Kind::Covariation;
  p.alpha_ = alpha;
  p.sites_ = sites;
  p.target_ = target;
  p.kappa_ = std::move(kappa);
  const int n = static_cast<int>(sites.size());
  p.kappa_sites_.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      p.kappa_sites_(i, j) = p.kappa_(sites[i], sites[j]);
    }
  }
  p.refresh_target();
  return p;
}

ExtrapProblem ExtrapProblem::sub_gaussian(const CovModel& model, double alpha,
                                          const std::vector<Eigen::VectorXd>& sites,
                                          const Eigen::VectorXd& target) {
  if (!(alpha > 0.0 && alpha <= 2.0)) {
    throw InvalidAlpha("sub-Gaussian problems need alpha in (0,2], got " +
                       std::to_string(alpha));
  }
  check_sites(sites, target);
  ExtrapProblem p;
  p.kind_ = Kind::SubGaussian;
  p.alpha_ = alpha;
  p.sites_ = sites;
  p.target_ = target;
  p.gauss_model_ = std::make_shared<CovModel>(model);
  const int n = static_cast<int>(sites.size());
  p.gauss_cov_.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double c = model(sites[i], sites[j]);
      p.gauss_cov_(i, j) = c;
      p.gauss_cov_(j, i) = c;
    }
  }
  p.refresh_target();
  return p;
}

void ExtrapProblem::refresh_target() {
  const int n = site_count();
  switch (kind_) {
    case Kind::Integral:
      target_kernel_ = *field_->kernel_vector(target_);
      break;
    case Kind::Covariation:
      kappa_site_target_.resize(n);
      kappa_target_site_.resize(n);
      for (int i = 0; i < n; ++i) {
        kappa_site_target_(i) = kappa_(sites_[i], target_);
        kappa_target_site_(i) = kappa_(target_, sites_[i]);
      }
      kappa_target_target_ = kappa_(target_, target_);
      if (kappa_target_target_ < 0.0) {
        throw ConfigError("covariation handle gives kappa(t,t) < 0");
      }
      break;
    case Kind::SubGaussian:
      gauss_cross_.resize(n);
      for (int i = 0; i < n; ++i) {
        gauss_cross_(i) = (*gauss_model_)(sites_[i], target_);
      }
      gauss_target_var_ = (*gauss_model_)(target_, target_);
      break;
  }
}

ExtrapProblem ExtrapProblem::with_target(const Eigen::VectorXd& target) const {
  if (kind_ == Kind::Integral && !field_) {
    throw ConfigError("decimated problems cannot be retargeted");
  }
  if (target.size() != target_.size()) {
    throw DimensionMismatch("with_target: dimension mismatch");
  }
  ExtrapProblem p = *this;
  p.target_ = target;
  p.refresh_target();
  return p;
}

ExtrapProblem ExtrapProblem::with_alpha(double alpha) const {
  if (!(alpha > 0.0 && alpha <= 2.0)) {
    throw InvalidAlpha("with_alpha: index must lie in (0,2]");
  }
  if (kind_ == Kind::Covariation && alpha <= 1.0) {
    throw InvalidAlpha("covariation-handle problems need alpha > 1");
  }
  ExtrapProblem p = *this;
  p.alpha_ = alpha;
  return p;
}

ExtrapProblem ExtrapProblem::decimated(int max_nodes) const {
  if (kind_ != Kind::Integral) {
    throw ConfigError("only integral-field problems can be decimated");
  }
  if (max_nodes < 1) throw ConfigError("decimated: max_nodes must be positive");
  const auto nodes = masses_.size();
  if (nodes <= max_nodes) return *this;

  const auto stride = (nodes + max_nodes - 1) / max_nodes;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < nodes; j += stride) keep.push_back(j);

  ExtrapProblem p = *this;
  p.field_.reset();
  const auto k = static_cast<Eigen::Index>(keep.size());
  p.kernels_.resize(kernels_.rows(), k);
  p.target_kernel_.resize(k);
  p.masses_.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    p.kernels_.col(c) = kernels_.col(keep[c]);
    p.target_kernel_(c) = target_kernel_(keep[c]);
    p.masses_(c) = masses_(keep[c]);
  }
  p.masses_ *= masses_.sum() / p.masses_.sum();
  return p;
}

double ExtrapProblem::error_scale(const Eigen::VectorXd& lambda) const {
  return error_scale_at_index(lambda, alpha_);
}

double ExtrapProblem::error_scale_at_index(const Eigen::VectorXd& lambda,
                                           double index) const {
  if (lambda.size() != site_count()) {
    throw DimensionMismatch("error_scale: weight count mismatch");
  }
  switch (kind_) {
    case Kind::Integral: {
      const Eigen::VectorXd r = target_kernel_ - kernels_.transpose() * lambda;
      return std::pow(power_sum(r, masses_, index), 1.0 / index);
    }
    case Kind::SubGaussian: {
      const double q = gauss_target_var_ - 2.0 * lambda.dot(gauss_cross_) +
                       lambda.dot(gauss_cov_ * lambda);
      return std::sqrt(std::max(q, 0.0) / 2.0);
    }
    case Kind::Covariation:
      break;
  }
  throw ConfigError("covariation-handle problems cannot evaluate error scales");
}

double ExtrapProblem::combo_scale(const Eigen::VectorXd& lambda) const {
  if (lambda.size() != site_count()) {
    throw DimensionMismatch("combo_scale: weight count mismatch");
  }
  switch (kind_) {
    case Kind::Integral: {
      const Eigen::VectorXd u = kernels_.transpose() * lambda;
      return std::pow(power_sum(u, masses_, alpha_), 1.0 / alpha_);
    }
    case Kind::SubGaussian: {
      const double q = lambda.dot(gauss_cov_ * lambda);
      return std::sqrt(std::max(q, 0.0) / 2.0);
    }
    case Kind::Covariation:
      break;
  }
  throw ConfigError("covariation-handle problems cannot evaluate combination scales");
}

double ExtrapProblem::target_scale() const {
  switch (kind_) {
    case Kind::Integral:
      return std::pow(power_sum(target_kernel_, masses_, alpha_), 1.0 / alpha_);
    case Kind::SubGaussian:
      return std::sqrt(std::max(gauss_target_var_, 0.0) / 2.0);
    case Kind::Covariation:
      return std::pow(kappa_target_target_, 1.0 / alpha_);
  }
  return 0.0;
}

double ExtrapProblem::site_scale(int i) const {
  switch (kind_) {
    case Kind::Integral:
      return std::pow(power_sum(kernels_.row(i).transpose(), masses_, alpha_),
                      1.0 / alpha_);
    case Kind::SubGaussian:
      return std::sqrt(std::max(gauss_cov_(i, i), 0.0) / 2.0);
    case Kind::Covariation:
      return std::pow(std::max(kappa_sites_(i, i), 0.0), 1.0 / alpha_);
  }
  return 0.0;
}

double ExtrapProblem::covariation(int i, int j) const {
  switch (kind_) {
    case Kind::SubGaussian:
      return sub_gaussian_kappa(alpha_, gauss_cov_(i, j), gauss_cov_(j, j));
    case Kind::Covariation:
      return kappa_sites_(i, j);
    case Kind::Integral: {
      if (alpha_ <= 1.0) {
        throw InvalidAlpha("covariation needs alpha > 1");
      }
      double s = 0.0;
      for (Eigen::Index k = 0; k < masses_.size(); ++k) {
        s += kernels_(i, k) * signed_power(kernels_(j, k), alpha_ - 1.0) *
             masses_(k);
      }
      return s;
    }
  }
  return 0.0;
}

double ExtrapProblem::covariation_site_target(int i) const {
  switch (kind_) {
    case Kind::SubGaussian:
      return sub_gaussian_kappa(alpha_, gauss_cross_(i), gauss_target_var_);
    case Kind::Covariation:
      return kappa_site_target_(i);
    case Kind::Integral: {
      if (alpha_ <= 1.0) {
        throw InvalidAlpha("covariation needs alpha > 1");
      }
      double s = 0.0;
      for (Eigen::Index k = 0; k < masses_.size(); ++k) {
        s += kernels_(i, k) * signed_power(target_kernel_(k), alpha_ - 1.0) *
             masses_(k);
      }
      return s;
    }
  }
  return 0.0;
}

double ExtrapProblem::covariation_target_site(int j) const {
  switch (kind_) {
    case Kind::SubGaussian:
      return sub_gaussian_kappa(alpha_, gauss_cross_(j), gauss_cov_(j, j));
    case Kind::Covariation:
      return kappa_target_site_(j);
    case Kind::Integral: {
      if (alpha_ <= 1.0) {
        throw InvalidAlpha("covariation needs alpha > 1");
      }
      double s = 0.0;
      for (Eigen::Index k = 0; k < masses_.size(); ++k) {
        s += target_kernel_(k) * signed_power(kernels_(j, k), alpha_ - 1.0) *
             masses_(k);
      }
      return s;
    }
  }
  return 0.0;
}

Eigen::VectorXd ExtrapProblem::covariation_with_combo(
    const Eigen::VectorXd& lambda) const {
  const int n = site_count();
  if (lambda.size() != n) {
    throw DimensionMismatch("covariation_with_combo: weight count mismatch");
  }
  switch (kind_) {
    case Kind::SubGaussian: {
      const double q = lambda.dot(gauss_cov_ * lambda);
      if (q <= 0.0) return Eigen::VectorXd::Zero(n);
      return std::pow(2.0, -0.5 * alpha_) *
             std::pow(q, 0.5 * (alpha_ - 2.0)) * (gauss_cov_ * lambda);
    }
    case Kind::Integral: {
      if (alpha_ <= 1.0) {
        throw InvalidAlpha("covariation needs alpha > 1");
      }
      const Eigen::VectorXd u = kernels_.transpose() * lambda;
      Eigen::VectorXd w(u.size());
      for (Eigen::Index k = 0; k < u.size(); ++k) {
        w(k) = signed_power(u(k), alpha_ - 1.0) * masses_(k);
      }
      return kernels_ * w;
    }
    case Kind::Covariation:
      break;
  }
  throw ConfigError(
      "covariation-handle problems cannot evaluate combination covariations");
}

Eigen::VectorXd ExtrapProblem::least_squares_init() const {
  const int n = site_count();
  switch (kind_) {
    case Kind::Integral: {
      const Eigen::MatrixXd gram =
          kernels_ * masses_.asDiagonal() * kernels_.transpose();
      const Eigen::VectorXd rhs =
          kernels_ * masses_.cwiseProduct(target_kernel_);
      return pinv_solve(0.5 * (gram + gram.transpose()), rhs);
    }
    case Kind::SubGaussian:
      return pinv_solve(gauss_cov_, gauss_cross_);
    case Kind::Covariation:
      break;
  }
  throw ConfigError("covariation-handle problems have no least-squares seed");
  return Eigen::VectorXd::Zero(n);
}

void ExtrapProblem::require_full_dimensional() const {
  Eigen::MatrixXd gram;
  switch (kind_) {
    case Kind::Integral:
      gram = kernels_ * masses_.asDiagonal() * kernels_.transpose();
      break;
    case Kind::SubGaussian:
      gram = gauss_cov_;
      break;
    case Kind::Covariation:
      return;  // checked when the covariation system is factorized
  }
  gram = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() <= 1e-10 * std::max(top, kTiny)) {
    throw SingularProblem("site kernels are linearly dependent");
  }
}

const Eigen::MatrixXd& ExtrapProblem::site_kernels() const {
  if (kind_ != Kind::Integral) {
    throw ConfigError("problem carries no quadrature kernels");
  }
  return kernels_;
}

const Eigen::VectorXd& ExtrapProblem::target_kernel() const {
  if (kind_ != Kind::Integral) {
    throw ConfigError("problem carries no quadrature kernels");
  }
  return target_kernel_;
}

const Eigen::VectorXd& ExtrapProblem::masses() const {
  if (kind_ != Kind::Integral) {
    throw ConfigError("problem carries no quadrature kernels");
  }
  return masses_;
}

namespace {

struct LslState {
  Eigen::VectorXd weights;
  double objective = 0.0;  // H^index
  int iterations = 0;
};

// Sites in a kernel-overlap component that does not reach the target carry
// zero weight in any least-scale minimizer: their objective contribution
// separates into an additive |lambda_i|^index term.  Marking them up front
// spares the iteration from chasing a weight toward exact zero through a
// first-order residual that itself decays like |lambda_i|^(index-1).
std::vector<bool> connected_to_target(const Eigen::MatrixXd& kernels,
                                      const Eigen::VectorXd& g,
                                      const Eigen::VectorXd& m) {
  const int n = static_cast<int>(kernels.rows());
  std::vector<int> parent(n + 1);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    if (!(m(j) > 0.0)) continue;
    int first = g(j) != 0.0 ? n : -1;
    for (int i = 0; i < n; ++i) {
      if (kernels(i, j) == 0.0) continue;
      if (first < 0) {
        first = i;
      } else {
        parent[find(i)] = find(first);
      }
    }
  }
  std::vector<bool> keep(static_cast<std::size_t>(n));
  const int root = find(n);
  for (int i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = find(i) == root;
  return keep;
}

// Damped Newton iteration on the convex objective sum m |g - F'lambda|^index.
// The Hessian is index (index-1) F W F' with W = diag(m |r|^(index-2)); the
// residual powers are floored so cells where the residual crosses zero keep
// the system finite.  Between the floor and the line search the direction is
// always a descent direction, and convergence is quadratic once the active
// residuals stabilize, which plain gradient steps cannot deliver for
// exponents close to one.
LslState lsl_descent_core(const Eigen::MatrixXd& kernels, const Eigen::VectorXd& g,
                     const Eigen::VectorXd& m, double index,
                     const Eigen::VectorXd& init, const Eigen::VectorXd& tol,
                     int max_iter) {
  const int n = static_cast<int>(kernels.rows());

  const auto value = [&](const Eigen::VectorXd& lam, Eigen::VectorXd* r_out) {
    Eigen::VectorXd r = g - kernels.transpose() * lam;
    const double v = power_sum(r, m, index);
    if (r_out) *r_out = std::move(r);
    return v;
  };
  const auto first_order = [&](const Eigen::VectorXd& r) {
    Eigen::VectorXd w(r.size());
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      w(j) = signed_power(r(j), index - 1.0) * m(j);
    }
    return (kernels * w).eval();
  };
  const auto within_tol = [&](const Eigen::VectorXd& res) {
    for (int k = 0; k < n; ++k) {
      if (std::abs(res(k)) > tol(k)) return false;
    }
    return true;
  };

  // When the target kernel is numerically in the span of the site kernels
  // (a knot, or a decimated copy) the error scale sits at the floating-point
  // floor and the first-order residual cannot cancel further, so a scale
  // this small counts as converged outright.
  const double sigma_t = std::pow(power_sum(g, m, index), 1.0 / index);
  const auto at_floor = [&](double objective) {
    return std::pow(objective, 1.0 / index) <= 1e-10 * sigma_t;
  };

  LslState st;
  st.weights = init;
  Eigen::VectorXd r;
  st.objective = value(st.weights, &r);
  Eigen::VectorXd res = first_order(r);

  int it = 0;
  bool ok = within_tol(res) || at_floor(st.objective);
  for (; it < max_iter && !ok; ++it) {
    const double scale = std::pow(st.objective, 1.0 / index);
    const double floor_r = std::max(1e-8 * scale, 1e-290);
    Eigen::VectorXd w(r.size());
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      w(j) = m(j) * std::pow(std::max(std::abs(r(j)), floor_r), index - 2.0);
    }
    Eigen::MatrixXd hess =
        kernels * w.asDiagonal() * kernels.transpose();
    hess.diagonal().array() +=
        1e-14 * hess.trace() / static_cast<double>(n) + 1e-290;

    Eigen::VectorXd dir = Eigen::LDLT<Eigen::MatrixXd>(hess).solve(res) /
                          (index - 1.0);
    double slope = -index * res.dot(dir);
    if (!(slope < 0.0) || !dir.allFinite()) {
      dir = res;  // fall back to the raw gradient direction
      slope = -index * res.squaredNorm();
      if (!(slope < 0.0)) break;
    }
    if (std::abs(slope) <= 1e-12 * (st.objective + 1e-300)) {
      // The model predicts a relative improvement below what double
      // precision can verify; the iterate is the numerical optimum even
      // when the raw first-order residual is pinned at cancellation noise.
      ok = true;
      break;
    }

    double t = 1.0;
    Eigen::VectorXd cand;
    double f_cand = 0.0;
    bool accepted = false;
    for (int h = 0; h < 60; ++h) {
      cand = st.weights + t * dir;
      f_cand = value(cand, &r);
      if (f_cand <= st.objective + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // The line search found no descent at floating-point resolution.  When
      // the predicted decrease is already negligible against the objective
      // the iterate sits at the numerical optimum; anything larger is a
      // genuine failure and falls through to the non-convergence throw.
      ok = std::abs(slope) <= 1e-12 * (st.objective + 1e-300);
      break;
    }

    const double move = t * dir.lpNorm<Eigen::Infinity>();
    st.weights = std::move(cand);
    st.objective = f_cand;
    res = first_order(r);
    ok = within_tol(res) || at_floor(st.objective) ||
         move <= 1e-12 * (1.0 + st.weights.lpNorm<Eigen::Infinity>());
  }
  st.iterations = it;
  if (!ok) {
    throw NonConvergence("lsl: first-order residual still above tolerance after " +
                         std::to_string(it) + " iterations");
  }
  return st;
}

LslState lsl_descent(const Eigen::MatrixXd& kernels, const Eigen::VectorXd& g,
                     const Eigen::VectorXd& m, double index,
                     const Eigen::VectorXd& init, const Eigen::VectorXd& tol,
                     int max_iter) {
  const int n = static_cast<int>(kernels.rows());
  const std::vector<bool> keep = connected_to_target(kernels, g, m);
  const int kept =
      static_cast<int>(std::count(keep.begin(), keep.end(), true));

  if (kept == n) return lsl_descent_core(kernels, g, m, index, init, tol, max_iter);

  // The target kernel vanishes on every cell of a dropped component, so the
  // reduced iteration still sees the full objective.
  LslState st;
  st.weights = Eigen::VectorXd::Zero(n);
  if (kept == 0) {
    st.objective = power_sum(g, m, index);
    return st;
  }

  Eigen::MatrixXd rk(kept, kernels.cols());
  Eigen::VectorXd rinit(kept), rtol(kept);
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(kept));
  for (int i = 0; i < n; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    rk.row(rows.size()) = kernels.row(i);
    rinit(static_cast<Eigen::Index>(rows.size())) = init(i);
    rtol(static_cast<Eigen::Index>(rows.size())) = tol(i);
    rows.push_back(i);
  }
  LslState sub = lsl_descent_core(rk, g, m, index, rinit, rtol, max_iter);
  for (int k = 0; k < kept; ++k) {
    st.weights(rows[static_cast<std::size_t>(k)]) = sub.weights(k);
  }
  st.objective = sub.objective;
  st.iterations = sub.iterations;
  return st;
}

Eigen::VectorXd lsl_tolerances(const ExtrapProblem& p, double index,
                               double rel_tol) {
  const int n = p.site_count();
  const double sigma_t =
      std::pow(power_sum(p.target_kernel(), p.masses(), index), 1.0 / index);
  Eigen::VectorXd tol(n);
  for (int k = 0; k < n; ++k) {
    const double sigma_k = std::pow(
        power_sum(p.site_kernels().row(k).transpose(), p.masses(), index),
        1.0 / index);
    tol(k) = rel_tol * std::max(sigma_k, kTiny) *
             std::pow(std::max(sigma_t, kTiny), index - 1.0);
  }
  return tol;
}

}  // namespace

ExtrapSolution lsl_solve(const ExtrapProblem& problem, const LslConfig& config) {
  ExtrapSolution out;
  out.method = ExtrapMethod::Lsl;
  const double alpha = problem.alpha();

  if (problem.kind() == ExtrapProblem::Kind::SubGaussian) {
    // The error scale is a quadratic form in lambda for every alpha, so the
    // minimizer solves the Gaussian-component kriging system outright.
    problem.require_full_dimensional();
    out.weights = problem.least_squares_init();
    out.objective = problem.error_scale(out.weights);
    return out;
  }
  if (problem.kind() == ExtrapProblem::Kind::Covariation) {
    throw ConfigError("lsl needs an integral field or a sub-Gaussian problem");
  }
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw InvalidAlpha(
        "lsl_solve needs alpha in (1,2]; use best_lsl_solve at alpha <= 1");
  }
  problem.require_full_dimensional();

  const Eigen::VectorXd init =
      config.init ? *config.init : problem.least_squares_init();
  const Eigen::VectorXd tol = lsl_tolerances(problem, alpha, config.tol);
  LslState st = lsl_descent(problem.site_kernels(), problem.target_kernel(),
                            problem.masses(), alpha, init, tol,
                            config.max_iter);
  out.weights = std::move(st.weights);
  out.objective = std::pow(st.objective, 1.0 / alpha);
  out.iterations = st.iterations;
  return out;
}

ExtrapSolution col_solve(const ExtrapProblem& problem) {
  const int n = problem.site_count();
  const double alpha = problem.alpha();
  if (problem.kind() != ExtrapProblem::Kind::SubGaussian && alpha <= 1.0) {
    throw InvalidAlpha("col_solve needs alpha > 1 (covariation undefined)");
  }

  // Orthogonality system: sum_i lambda_i kappa(t_i, t_j) = kappa(t, t_j),
  // one equation per conditioning site t_j; not symmetric in general.
  Eigen::MatrixXd m(n, n);
  Eigen::VectorXd rhs(n);
  if (problem.kind() == ExtrapProblem::Kind::Integral) {
    const Eigen::MatrixXd& f = problem.site_kernels();
    const Eigen::VectorXd& g = problem.target_kernel();
    const Eigen::VectorXd& mass = problem.masses();
    Eigen::VectorXd w(mass.size());
    for (int j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < mass.size(); ++k) {
        w(k) = signed_power(f(j, k), alpha - 1.0) * mass(k);
      }
      m.row(j) = (f * w).transpose();
      rhs(j) = g.dot(w);
    }
  } else {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) m(j, i) = problem.covariation(i, j);
      rhs(j) = problem.covariation_target_site(j);
    }
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) {
    throw SingularSystem("covariation system is singular");
  }

  ExtrapSolution out;
  out.method = ExtrapMethod::Col;
  out.weights = lu.solve(rhs);
  out.objective = problem.can_error_scale()
                      ? problem.error_scale(out.weights)
                      : std::numeric_limits<double>::quiet_NaN();
  return out;
}

ExtrapSolution mcl_solve(const ExtrapProblem& problem, const MclConfig& config) {
  const int n = problem.site_count();
  const double alpha = problem.alpha();
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw InvalidAlpha("mcl_solve needs alpha in (1,2]");
  }
  if (problem.kind() == ExtrapProblem::Kind::Covariation) {
    throw ConfigError("mcl needs an integral field or a sub-Gaussian problem");
  }

  Eigen::VectorXd zeta(n);
  for (int i = 0; i < n; ++i) zeta(i) = problem.covariation_site_target(i);
  const double zeta_norm = zeta.lpNorm<Eigen::Infinity>();

  const double sigma0 = problem.target_scale();
  double site_cap = 0.0;
  for (int i = 0; i < n; ++i) site_cap = std::max(site_cap, problem.site_scale(i));
  // |zeta_i| <= sigma_i sigma_t^{alpha-1}, so this is the natural magnitude.
  const double zeta_cap =
      site_cap * std::pow(std::max(sigma0, kTiny), alpha - 1.0);
  if (zeta_norm <= 1e-14 * std::max(zeta_cap, kTiny)) {
    throw ZeroCovariationVector(
        "mcl: the covariation vector zeta(t) vanishes; the maximizer is not unique");
  }

  // Seed with the orthogonality solution (exact optimum for sub-Gaussian
  // problems); fall back to zeta itself when that system degenerates.
  Eigen::VectorXd lam;
  try {
    lam = col_solve(problem).weights;
  } catch (const SingularSystem&) {
    lam = zeta;
  }
  if (problem.combo_scale(lam) <= kTiny) lam = zeta;
  {
    const double psi = problem.combo_scale(lam);
    if (psi <= kTiny) {
      throw SingularProblem("mcl: every seed combination has zero scale");
    }
    lam /= psi;
  }
  if (lam.dot(zeta) < 0.0) lam = -lam;

  const auto kkt = [&](const Eigen::VectorXd& l, double* mult) {
    const Eigen::VectorXd v = problem.covariation_with_combo(l);
    const double vv = v.squaredNorm();
    const double c = vv > 0.0 ? zeta.dot(v) / vv : 0.0;
    if (mult) *mult = c;
    return (zeta - c * v).lpNorm<Eigen::Infinity>() / (1.0 + zeta_norm);
  };

  double cstar = 0.0;
  double res = kkt(lam, &cstar);
  double obj = lam.dot(zeta);
  double step = (1.0 + lam.norm()) / (1.0 + zeta.norm());
  int it = 0;
  for (; it < config.max_iter && res > config.tol; ++it) {
    // Ascent along the level-set gradient of <lambda, zeta>, then radial
    // projection back onto {Psi = 1} (scale sets are homothetic).
    const Eigen::VectorXd v = problem.covariation_with_combo(lam);
    const Eigen::VectorXd dir = zeta - obj * v;
    bool moved = false;
    for (int h = 0; h < 60; ++h) {
      Eigen::VectorXd cand = lam + step * dir;
      const double psi = problem.combo_scale(cand);
      if (psi > kTiny) {
        cand /= psi;
        const double obj_c = cand.dot(zeta);
        if (obj_c > obj * (1.0 + 1e-16)) {
          lam = std::move(cand);
          obj = obj_c;
          step *= 1.3;
          moved = true;
          break;
        }
      }
      step *= 0.5;
    }
    res = kkt(lam, &cstar);
    if (!moved) break;
  }
  if (res > config.tol) {
    throw NonConvergence("mcl: KKT residual " + std::to_string(res) +
                         " above tolerance after " + std::to_string(it) +
                         " iterations");
  }

  ExtrapSolution out;
  out.method = ExtrapMethod::Mcl;
  out.weights = sigma0 * lam;
  out.objective = out.weights.dot(zeta);
  out.iterations = it;
  // Multiplier of the stationarity system at the final scale:
  // zeta + gamma alpha [X(t_j), X_hat]_alpha = 0.
  double c_final = 0.0;
  out.kkt_residual = kkt(out.weights, &c_final);
  out.multiplier = -c_final / alpha;
  return out;
}

namespace {

struct BestLslWorkspace {
  const ExtrapProblem* full = nullptr;
  const ExtrapProblem* coarse = nullptr;
  double alpha = 1.0;
  bool sum_to_one = false;

  double phi_full(const Eigen::VectorXd& lam) const {
    const Eigen::VectorXd r =
        full->target_kernel() - full->site_kernels().transpose() * lam;
    return power_sum(r, full->masses(), alpha);
  }
  double phi_coarse(const Eigen::VectorXd& lam) const {
    const Eigen::VectorXd r =
        coarse->target_kernel() - coarse->site_kernels().transpose() * lam;
    return power_sum(r, coarse->masses(), alpha);
  }
};

Eigen::VectorXd project_sum_one(const Eigen::VectorXd& lam) {
  Eigen::VectorXd out = lam;
  out.array() += (1.0 - lam.sum()) / static_cast<double>(lam.size());
  return out;
}

// Local simplex polish; `full` selects the quadrature (coarse during the
// search, full for representatives). Under the sum constraint the last
// coordinate is eliminated.
Eigen::VectorXd polish(const BestLslWorkspace& ws, bool full,
                       const Eigen::VectorXd& start) {
  const int n = static_cast<int>(start.size());
  const auto phi = [&](const Eigen::VectorXd& x) {
    return full ? ws.phi_full(x) : ws.phi_coarse(x);
  };
  const int budget = 60 * n + 80;
  if (!ws.sum_to_one) {
    return detail::nelder_mead(phi, start,
                               0.1 * (1.0 + start.lpNorm<Eigen::Infinity>()),
                               budget, 1e-13, nullptr);
  }
  if (n == 1) return Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd free0 = start.head(n - 1);
  const auto assemble = [&](const Eigen::VectorXd& free) {
    Eigen::VectorXd lam(n);
    lam.head(n - 1) = free;
    lam(n - 1) = 1.0 - free.sum();
    return lam;
  };
  const Eigen::VectorXd best = detail::nelder_mead(
      [&](const Eigen::VectorXd& x) { return phi(assemble(x)); }, free0,
      0.1 * (1.0 + start.lpNorm<Eigen::Infinity>()), budget, 1e-13, nullptr);
  return assemble(best);
}

std::vector<Eigen::VectorXd> anneal_starts(const BestLslWorkspace& ws,
                                           const std::vector<Eigen::VectorXd>& seeds,
                                           const AnnealConfig& cfg) {
  const int n = static_cast<int>(seeds.front().size());
  std::vector<Eigen::VectorXd> found;
  const auto& coarse = *ws.coarse;
  const Eigen::MatrixXd& f = coarse.site_kernels();
  const Eigen::VectorXd& g = coarse.target_kernel();
  const Eigen::VectorXd& m = coarse.masses();

  for (int s = 0; s < cfg.starts; ++s) {
    Rng rng(Rng::mix(cfg.seed, 0xbea571ull + static_cast<std::uint64_t>(s)));
    Eigen::VectorXd lam = seeds[static_cast<std::size_t>(s) % seeds.size()];
    if (static_cast<std::size_t>(s) >= seeds.size()) {
      for (int i = 0; i < n; ++i) lam(i) += 0.5 * rng.normal();
      if (ws.sum_to_one) lam = project_sum_one(lam);
    }

    Eigen::VectorXd r = g - f.transpose() * lam;
    double phi = power_sum(r, m, ws.alpha);
    Eigen::VectorXd best = lam;
    double best_phi = phi;

    const double t0 = 0.5 * (1.0 + phi);
    double t = t0;
    const double step0 = 0.5 * (1.0 + lam.lpNorm<Eigen::Infinity>());
    const int cool_every = std::max(1, cfg.proposals / 100);
    Eigen::VectorXd r_new(r.size());

    for (int k = 0; k < cfg.proposals; ++k) {
      const int coord = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      const double width = step0 * std::max(0.05, std::sqrt(t / t0));
      const double delta = width * rng.normal();
      int coord2 = -1;
      if (ws.sum_to_one && n >= 2) {
        coord2 = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
        if (coord2 >= coord) ++coord2;
      }
      r_new = r - delta * f.row(coord).transpose();
      if (coord2 >= 0) r_new += delta * f.row(coord2).transpose();
      const double phi_new = power_sum(r_new, m, ws.alpha);
      const bool accept = phi_new <= phi ||
                          rng.uniform() < std::exp(-(phi_new - phi) / t);
      if (accept) {
        lam(coord) += delta;
        if (coord2 >= 0) lam(coord2) -= delta;
        r.swap(r_new);
        phi = phi_new;
        if (phi < best_phi) {
          best_phi = phi;
          best = lam;
        }
      }
      if ((k + 1) % cool_every == 0) t *= cfg.cooling;
    }
    found.push_back(best);
  }
  return found;
}

// Candidate minimizers for the 1-D problem by a dense scan; plateau runs
// contribute both endpoints so interval-shaped minimum sets survive into
// the reduction.
std::vector<Eigen::VectorXd> line_scan(const BestLslWorkspace& ws,
                                       const std::vector<Eigen::VectorXd>& seeds) {
  double lo = -3.0, hi = 3.0;
  for (const auto& s : seeds) {
    lo = std::min(lo, s(0) - 3.0);
    hi = std::max(hi, s(0) + 3.0);
  }
  const int pts = 4097;
  std::vector<double> values(pts);
  Eigen::VectorXd lam(1);
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < pts; ++j) {
    lam(0) = lo + (hi - lo) * j / (pts - 1);
    values[j] = ws.phi_coarse(lam);
    best = std::min(best, values[j]);
  }
  const double cut = best + 1e-9 * (1.0 + best);
  std::vector<Eigen::VectorXd> out;
  int run_start = -1;
  for (int j = 0; j <= pts; ++j) {
    const bool in = j < pts && values[j] <= cut;
    if (in && run_start < 0) run_start = j;
    if (!in && run_start >= 0) {
      Eigen::VectorXd a(1), b(1);
      a(0) = lo + (hi - lo) * run_start / (pts - 1);
      b(0) = lo + (hi - lo) * (j - 1) / (pts - 1);
      out.push_back(a);
      if (j - 1 != run_start) out.push_back(b);
      run_start = -1;
    }
  }
  return out;
}

}  // namespace

ExtrapSolution best_lsl_solve(const ExtrapProblem& problem,
                              const AnnealConfig& config) {
  const double alpha = problem.alpha();
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidAlpha("best_lsl_solve needs alpha in (0,1]");
  }
  if (problem.kind() == ExtrapProblem::Kind::Covariation) {
    throw ConfigError("best-lsl needs an integral field or a sub-Gaussian problem");
  }
  const int n = problem.site_count();

  ExtrapSolution out;
  out.method = ExtrapMethod::BestLsl;

  if (problem.kind() == ExtrapProblem::Kind::SubGaussian) {
    // The objective is strictly convex for every alpha, so the minimum set
    // is a single point and the reduction is the identity. Under the sum
    // constraint the minimum solves the bordered quadratic system.
    problem.require_full_dimensional();
    if (config.sum_to_one) {
      // Recover the Gaussian second moments through the alpha = 2
      // covariation (half the covariance) and solve the bordered system.
      const ExtrapProblem p2 = problem.with_alpha(2.0);
      Eigen::MatrixXd bordered = Eigen::MatrixXd::Zero(n + 1, n + 1);
      Eigen::VectorXd rhs(n + 1);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) bordered(i, j) = 2.0 * p2.covariation(i, j);
        bordered(i, n) = bordered(n, i) = 1.0;
        rhs(i) = 2.0 * p2.covariation_site_target(i);
      }
      rhs(n) = 1.0;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(bordered);
      if (!lu.isInvertible()) {
        throw SingularSystem("sum-constrained quadratic system is singular");
      }
      out.weights = lu.solve(rhs).head(n);
      out.objective = problem.error_scale(out.weights);
      return out;
    }
    out.weights = problem.least_squares_init();
    out.objective = problem.error_scale(out.weights);
    return out;
  }

  problem.require_full_dimensional();

  BestLslWorkspace ws;
  ws.full = &problem;
  ws.alpha = alpha;
  ws.sum_to_one = config.sum_to_one && n >= 2;
  if (config.sum_to_one && n == 1) {
    // Sum-one with a single site pins the weight.
    out.weights = Eigen::VectorXd::Ones(1);
    out.objective = problem.error_scale(out.weights);
    return out;
  }

  // Priority order: distance to the target ascending, ties broken by the
  // lexicographic order of the site coordinates.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = (problem.sites()[a] - problem.target()).norm();
    const double db = (problem.sites()[b] - problem.target()).norm();
    if (da != db) return da < db;
    return lex_less(problem.sites()[a], problem.sites()[b]);
  });

  // Seed candidates: least-squares weights, each delta vector, zero.
  std::vector<Eigen::VectorXd> seeds;
  seeds.push_back(problem.least_squares_init());
  for (int j = 0; j < n; ++j) {
    seeds.push_back(Eigen::VectorXd::Unit(n, j));
  }
  if (!ws.sum_to_one) seeds.push_back(Eigen::VectorXd::Zero(n));
  if (ws.sum_to_one) seeds.front() = project_sum_one(seeds.front());

  const double scale0 = power_sum(problem.target_kernel(), problem.masses(), alpha);
  double seed_best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd seed_arg;
  for (const auto& s : seeds) {
    const double v = ws.phi_full(s);
    if (v < seed_best) {
      seed_best = v;
      seed_arg = s;
    }
  }
  // Exact representation: by full dimensionality the zero of H is the unique
  // global minimum, so the search stages are unnecessary.
  if (seed_best <= 1e-18 * std::max(scale0, kTiny)) {
    out.weights = seed_arg;
    out.objective = std::pow(seed_best, 1.0 / alpha);
    return out;
  }

  const ExtrapProblem coarse = problem.decimated(config.max_quad_nodes);
  ws.coarse = &coarse;

  // Stage 1: approximate the global-minimum set A0.
  std::vector<Eigen::VectorXd> raw;
  int search_evals = 0;
  if (n == 1 && !ws.sum_to_one) {
    raw = line_scan(ws, seeds);
    search_evals = 4097;
  } else {
    raw = anneal_starts(ws, seeds, config);
    search_evals = config.starts * config.proposals;
  }
  raw.insert(raw.end(), seeds.begin(), seeds.end());

  // Cheap polish on the coarse quadrature, keeping the raw points too
  // (polishing can drift along flat valleys, losing plateau endpoints).
  std::vector<Eigen::VectorXd> polished;
  polished.reserve(2 * raw.size());
  for (const auto& x : raw) polished.push_back(polish(ws, false, x));
  for (const auto& x : raw) polished.push_back(x);

  // Cluster on the coarse objective: near-minimal points deduped by weight
  // distance. These are the representatives of the minimum set A0.
  const auto cluster = [&](const std::vector<Eigen::VectorXd>& pts,
                           const std::function<double(const Eigen::VectorXd&)>& phi,
                           std::size_t cap) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, Eigen::VectorXd>> ranked;
    for (const auto& x : pts) {
      const double v = phi(x);
      best = std::min(best, v);
      ranked.emplace_back(v, x);
    }
    if (!std::isfinite(best)) {
      throw NonConvergence("best-lsl: search produced no finite objective");
    }
    const double cut = best + config.obj_tol * (1.0 + best);
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Eigen::VectorXd> kept;
    for (const auto& [v, x] : ranked) {
      if (v > cut) break;
      bool dup = false;
      for (const auto& r : kept) {
        if ((x - r).lpNorm<Eigen::Infinity>() <= config.weight_tol) {
          dup = true;
          break;
        }
      }
      if (!dup) kept.push_back(x);
      if (kept.size() >= cap) break;
    }
    return kept;
  };

  std::vector<Eigen::VectorXd> reps = cluster(
      polished, [&](const Eigen::VectorXd& x) { return ws.phi_coarse(x); }, 64);

  // Representatives alone get the expensive full-quadrature polish; all
  // final values and the reduction below use the full quadrature.
  std::vector<Eigen::VectorXd> refined;
  refined.reserve(2 * reps.size());
  for (const auto& x : reps) refined.push_back(polish(ws, true, x));
  for (const auto& x : reps) refined.push_back(x);
  reps = cluster(
      refined, [&](const Eigen::VectorXd& x) { return ws.phi_full(x); }, 64);
  if (reps.empty()) {
    throw NonConvergence("best-lsl: minimum set approximation is empty");
  }

  double phi_star = std::numeric_limits<double>::infinity();
  for (const auto& x : reps) phi_star = std::min(phi_star, ws.phi_full(x));
  const double obj_cut = phi_star + config.obj_tol * (1.0 + phi_star);

  // Stage 2: reduction. Fix coordinates in priority order at their maximum
  // over the minimizer set; a doubling+bisection walk locates the edge of
  // flat plateaus that the finite representative set cannot see.
  std::vector<bool> fixed(n, false);
  Eigen::VectorXd chosen = Eigen::VectorXd::Zero(n);
  int walk_evals = 0;

  const auto assemble = [&](int coord, double value,
                            const Eigen::VectorXd& free_seed) {
    Eigen::VectorXd lam = free_seed;
    for (int i = 0; i < n; ++i) {
      if (fixed[i]) lam(i) = chosen(i);
    }
    lam(coord) = value;
    return lam;
  };
  // Minimum of phi over the unfixed coordinates (coord held at value);
  // the seed supplies the free part.
  const auto feasible_value = [&](int coord, double value,
                                  Eigen::VectorXd* arg_out) {
    Eigen::VectorXd lam0 = assemble(coord, value, arg_out ? *arg_out : reps.front());
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      if (!fixed[i] && i != coord) free_idx.push_back(i);
    }
    if (free_idx.empty()) {
      ++walk_evals;
      if (arg_out) *arg_out = lam0;
      return ws.phi_full(lam0);
    }
    Eigen::VectorXd f0(free_idx.size());
    for (std::size_t i = 0; i < free_idx.size(); ++i) f0(i) = lam0(free_idx[i]);
    const auto expand = [&](const Eigen::VectorXd& f) {
      Eigen::VectorXd lam = lam0;
      for (std::size_t i = 0; i < free_idx.size(); ++i) lam(free_idx[i]) = f(i);
      return lam;
    };
    const Eigen::VectorXd best_f = detail::nelder_mead(
        [&](const Eigen::VectorXd& f) { return ws.phi_full(expand(f)); }, f0,
        0.05 * (1.0 + f0.lpNorm<Eigen::Infinity>()),
        std::min(240, 60 * static_cast<int>(free_idx.size())), 1e-12, nullptr);
    ++walk_evals;
    const Eigen::VectorXd lam_best = expand(best_f);
    if (arg_out) *arg_out = lam_best;
    return ws.phi_full(lam_best);
  };

  for (int k = 0; k < n; ++k) {
    const int coord = order[k];
    double cur_max = -std::numeric_limits<double>::infinity();
    std::size_t max_rep = 0;
    for (std::size_t i = 0; i < reps.size(); ++i) {
      if (reps[i](coord) > cur_max) {
        cur_max = reps[i](coord);
        max_rep = i;
      }
    }

    double edge = cur_max;
    Eigen::VectorXd edge_arg = reps[max_rep];
    const bool walk = !ws.sum_to_one && (n == 1 || reps.size() >= 2);
    if (walk) {
      double lo = cur_max;
      Eigen::VectorXd lo_arg = reps[max_rep];
      double gap = 0.25 * (1.0 + std::abs(cur_max));
      double hi = lo + gap;
      int expansions = 0;
      while (expansions < 8) {
        Eigen::VectorXd arg = lo_arg;
        const double v = feasible_value(coord, hi, &arg);
        if (v > obj_cut) break;
        lo = hi;
        lo_arg = arg;
        gap *= 2.0;
        hi = lo + gap;
        ++expansions;
      }
      for (int b = 0; b < 40 && hi - lo > 1e-10 * (1.0 + std::abs(lo)); ++b) {
        const double mid = 0.5 * (lo + hi);
        Eigen::VectorXd arg = lo_arg;
        const double v = feasible_value(coord, mid, &arg);
        if (v <= obj_cut) {
          lo = mid;
          lo_arg = arg;
        } else {
          hi = mid;
        }
      }
      edge = lo;
      edge_arg = lo_arg;
    }

    fixed[coord] = true;
    chosen(coord) = edge;

    // Survivors: representatives attaining (near) the maximum, plus the walk
    // point; all pinned to the chosen coordinate value. Under the sum
    // constraint the pinning deficit is spread over the free coordinates so
    // survivors stay feasible.
    const auto pin = [&](Eigen::VectorXd rr) {
      const double deficit = rr(coord) - edge;
      rr(coord) = edge;
      if (ws.sum_to_one) {
        int free_count = 0;
        for (int i = 0; i < n; ++i) {
          if (!fixed[i]) ++free_count;
        }
        if (free_count > 0) {
          for (int i = 0; i < n; ++i) {
            if (!fixed[i]) rr(i) += deficit / free_count;
          }
        }
      }
      return rr;
    };
    std::vector<Eigen::VectorXd> next;
    for (auto& r : reps) {
      if (r(coord) >= edge - config.weight_tol ||
          r(coord) >= cur_max - config.weight_tol) {
        next.push_back(pin(r));
      }
    }
    next.push_back(pin(edge_arg));
    reps = std::move(next);
  }

  out.weights = chosen;
  out.objective = std::pow(ws.phi_full(chosen), 1.0 / alpha);
  out.iterations = search_evals + walk_evals;
  return out;
}

ExtrapSolution iclsl_solve(const ExtrapProblem& problem,
                           const IclslConfig& config) {
  if (std::abs(problem.alpha() - 1.0) > 1e-9) {
    throw InvalidAlpha("iclsl_solve is the alpha = 1 predictor");
  }
  if (problem.kind() == ExtrapProblem::Kind::Covariation) {
    throw ConfigError("iclsl needs an integral field or a sub-Gaussian problem");
  }

  ExtrapSolution out;
  out.method = ExtrapMethod::Iclsl;

  if (problem.kind() == ExtrapProblem::Kind::SubGaussian) {
    // Every index gives the same quadratic problem; the limit is immediate.
    problem.require_full_dimensional();
    out.weights = problem.least_squares_init();
    out.objective = problem.error_scale(out.weights);
    out.iterations = 1;
    return out;
  }

  Eigen::VectorXd prev;
  LslConfig inner = config.inner;
  for (int k = 1; k <= config.max_level; ++k) {
    const double gamma = 1.0 + std::ldexp(1.0, -k);
    const ExtrapProblem pk = problem.with_alpha(gamma);
    inner.init = prev.size() ? std::optional<Eigen::VectorXd>(prev) : std::nullopt;
    const ExtrapSolution sk = lsl_solve(pk, inner);
    if (prev.size()) {
      const double step = (sk.weights - prev).lpNorm<Eigen::Infinity>();
      out.step_history.push_back(step);
      if (step < config.tol) {
        out.weights = sk.weights;
        out.iterations = k;
        out.objective = problem.error_scale(sk.weights);
        return out;
      }
    }
    prev = sk.weights;
  }
  throw NonConvergence("iclsl: weight sequence did not settle within " +
                       std::to_string(config.max_level) + " index levels");
}

ExtrapSolution solve_extrap(const ExtrapProblem& problem, ExtrapMethod method,
                            const SolverConfig& config) {
  switch (method) {
    case ExtrapMethod::Lsl:
      return lsl_solve(problem, config.lsl);
    case ExtrapMethod::Col:
      return col_solve(problem);
    case ExtrapMethod::Mcl:
      return mcl_solve(problem, config.mcl);
    case ExtrapMethod::BestLsl:
      return best_lsl_solve(problem, config.anneal);
    case ExtrapMethod::Iclsl:
      return iclsl_solve(problem, config.iclsl);
  }
  throw ConfigError("unknown extrapolation method");
}

double covariation_mixed_moment_estimate(const Eigen::VectorXd& x1,
                                         const Eigen::VectorXd& x2,
                                         double alpha, double p, double sigma2) {
  if (x1.size() != x2.size() || x1.size() == 0) {
    throw DimensionMismatch("mixed-moment estimator needs paired samples");
  }
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw InvalidAlpha("mixed-moment estimator needs alpha in (1,2]");
  }
  if (!(p >= 1.0 && p < alpha)) {
    throw InvalidMomentOrder("mixed-moment estimator needs 1 <= p < alpha");
  }
  if (!(sigma2 > 0.0)) {
    throw ZeroScale("mixed-moment estimator needs a positive scale for X2");
  }
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < x1.size(); ++i) {
    num += x1(i) * signed_power(x2(i), p - 1.0);
    den += std::pow(std::abs(x2(i)), p);
  }
  if (den <= 0.0) {
    throw DegenerateSample("mixed-moment estimator: |X2|^p has zero mean");
  }
  return std::pow(sigma2, alpha) * num / den;
}

namespace {

double cached_moment_factor(double alpha, double p) {
  static std::mutex mu;
  static std::map<std::pair<long long, long long>, double> cache;
  const std::pair<long long, long long> key{
      std::llround(alpha * 1e9), std::llround(p * 1e9)};
  {
    std::lock_guard<std::mutex> lock(mu);
    const auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const double value = moment_constant(alpha, 0.0, p).value;
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, value);
  return value;
}

}  // namespace

ErrorReport error_report(const ExtrapProblem& problem,
                         const ExtrapSolution& solution,
                         const std::vector<Eigen::VectorXd>& probes, double p,
                         const SolverConfig& config) {
  const double alpha = problem.alpha();
  if (!(p > 1.0 && p < alpha)) {
    throw InvalidMomentOrder("error_report needs p in (1, alpha)");
  }
  if (!problem.can_error_scale()) {
    throw ConfigError("error_report needs an integral field or a sub-Gaussian problem");
  }
  ErrorReport report;
  report.p = p;
  report.moment_factor = cached_moment_factor(alpha, p);
  for (const auto& t : probes) {
    const ExtrapProblem pt = problem.with_target(t);
    const ExtrapSolution st = solve_extrap(pt, solution.method, config);
    ErrorProbe row;
    row.target = t;
    row.error_scale = pt.error_scale(st.weights);
    row.moment_scale = report.moment_factor * row.error_scale;
    report.sup_moment_scale = std::max(report.sup_moment_scale, row.moment_scale);
    report.rows.push_back(std::move(row));
  }
  return report;
}

ExtrapGridResult extrap_grid(const ExtrapProblem& base,
                             const Eigen::VectorXd& site_values,
                             ExtrapMethod method, const GridSpec& targets,
                             const SolverConfig& config, int jobs) {
  targets.validate();
  const int n = base.site_count();
  if (site_values.size() != n) {
    throw DimensionMismatch("extrap_grid: one value per site required");
  }
  const std::size_t count = targets.size();

  ExtrapGridResult out;
  out.prediction.grid = targets;
  out.prediction.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
  out.prediction.meta["kind"] = "extrap_prediction";
  out.prediction.meta["method"] = method_name(method);
  out.weights.resize(static_cast<Eigen::Index>(count), n);
  out.objectives.assign(count, 0.0);

  parallel_for(count, jobs, [&](std::size_t i) {
    const ExtrapProblem pt = base.with_target(targets.site(i));
    const ExtrapSolution st = solve_extrap(pt, method, config);
    out.prediction.values[i] = st.weights.dot(site_values);
    out.weights.row(static_cast<Eigen::Index>(i)) = st.weights.transpose();
    out.objectives[i] = st.objective;
  });
  return out;
}

}  // namespace stablefield
