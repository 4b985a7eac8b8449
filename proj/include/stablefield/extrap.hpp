#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stablefield/cov_models.hpp"
#include "stablefield/grid.hpp"
#include "stablefield/measure.hpp"

// Linear extrapolation of stable random fields.  Five predictors: least
// scale (LSL), covariation orthogonality (COL), covariation maximization
// under scale preservation (MCL), the tie-broken best-LSL selection for
// alpha <= 1, and the index-continuation ICLSL limit at alpha = 1.

namespace stablefield {

enum class ExtrapMethod { Lsl, Col, Mcl, BestLsl, Iclsl };

std::string method_name(ExtrapMethod method);
ExtrapMethod method_from_name(const std::string& name);

// A prediction instance: target site, observation sites, and one of three
// model backends.  Integral-field problems carry the quadrature-sampled
// kernel vectors; covariation problems carry a kappa(s,t) handle only;
// sub-Gaussian problems carry the Gaussian covariance and evaluate every
// scale and covariation in closed form.
class ExtrapProblem {
 public:
  enum class Kind { Integral, Covariation, SubGaussian };

  static ExtrapProblem from_field(const IntegralField& field,
                                  const std::vector<Eigen::VectorXd>& sites,
                                  const Eigen::VectorXd& target);
  static ExtrapProblem from_covariation(
      std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>
          kappa,
      double alpha, const std::vector<Eigen::VectorXd>& sites,
      const Eigen::VectorXd& target);
  static ExtrapProblem sub_gaussian(const CovModel& model, double alpha,
                                    const std::vector<Eigen::VectorXd>& sites,
                                    const Eigen::VectorXd& target);

  ExtrapProblem with_target(const Eigen::VectorXd& target) const;
  ExtrapProblem with_alpha(double alpha) const;  // index continuation
  ExtrapProblem decimated(int max_nodes) const;  // integral problems only

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  int site_count() const { return static_cast<int>(sites_.size()); }
  const std::vector<Eigen::VectorXd>& sites() const { return sites_; }
  const Eigen::VectorXd& target() const { return target_; }
  bool sub_gaussian_kind() const { return kind_ == Kind::SubGaussian; }

  // Scale of X(t) - sum_i lambda_i X(t_i); the LSL objective H.
  double error_scale(const Eigen::VectorXd& lambda) const;
  // Same quantity with the exponent overridden (ICLSL inner objective).
  double error_scale_at_index(const Eigen::VectorXd& lambda, double index) const;
  // Scale of sum_i lambda_i X(t_i).
  double combo_scale(const Eigen::VectorXd& lambda) const;
  double target_scale() const;
  double site_scale(int i) const;

  // kappa(t_i, t_j), linear in the first argument; needs alpha > 1 unless
  // the problem is sub-Gaussian.
  double covariation(int i, int j) const;
  double covariation_site_target(int i) const;  // kappa(t_i, t)
  double covariation_target_site(int j) const;  // kappa(t, t_j)
  // v_k = [X(t_k), sum_i lambda_i X(t_i)]_alpha for all k.
  Eigen::VectorXd covariation_with_combo(const Eigen::VectorXd& lambda) const;

  // Least-squares (alpha = 2) weights; the canonical iterative-solver seed.
  Eigen::VectorXd least_squares_init() const;
  // Fails with SingularProblem when the site kernels are linearly dependent.
  void require_full_dimensional() const;

  bool can_error_scale() const { return kind_ != Kind::Covariation; }

  const Eigen::MatrixXd& site_kernels() const;   // integral problems
  const Eigen::VectorXd& target_kernel() const;  // integral problems
  const Eigen::VectorXd& masses() const;         // integral problems

 private:
  ExtrapProblem() = default;
  void refresh_target();

  Kind kind_ = Kind::Integral;
  double alpha_ = 2.0;
  std::vector<Eigen::VectorXd> sites_;
  Eigen::VectorXd target_;

  std::shared_ptr<const IntegralField> field_;
  Eigen::MatrixXd kernels_;  // n x J rows of f_{t_i} at quadrature nodes
  Eigen::VectorXd target_kernel_;
  Eigen::VectorXd masses_;

  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> kappa_;
  Eigen::MatrixXd kappa_sites_;  // (i,j) = kappa(t_i, t_j)
  Eigen::VectorXd kappa_site_target_;
  Eigen::VectorXd kappa_target_site_;
  double kappa_target_target_ = 0.0;

  std::shared_ptr<const CovModel> gauss_model_;
  Eigen::MatrixXd gauss_cov_;
  Eigen::VectorXd gauss_cross_;
  double gauss_target_var_ = 0.0;
};

struct ExtrapSolution {
  Eigen::VectorXd weights;
  ExtrapMethod method = ExtrapMethod::Lsl;
  // Error scale H(lambda) for LSL-family methods and COL (NaN when the
  // problem cannot evaluate scales); <lambda, zeta> for MCL.
  double objective = 0.0;
  int iterations = 0;
  bool converged = true;
  double kkt_residual = 0.0;            // MCL stationarity residual
  double multiplier = 0.0;              // MCL Lagrange multiplier gamma
  std::vector<double> step_history;     // ICLSL successive weight steps
};

struct LslConfig {
  int max_iter = 5000;
  double tol = 1e-8;  // first-order residual, relative to the problem scale
  std::optional<Eigen::VectorXd> init;
};

struct MclConfig {
  int max_iter = 2000;
  double tol = 1e-6;  // KKT residual, relative to 1 + |zeta|_inf
};

struct AnnealConfig {
  int starts = 32;
  double cooling = 0.95;
  int proposals = 20000;
  int max_quad_nodes = 2048;
  std::uint64_t seed = 1;
  double obj_tol = 1e-6;    // cluster tolerance, relative to 1 + best
  double weight_tol = 1e-3;
  bool sum_to_one = false;  // optional unbiasedness constraint
};

struct IclslConfig {
  int max_level = 40;
  double tol = 1e-6;  // stop when successive weights move less than this
  LslConfig inner;
};

struct SolverConfig {
  LslConfig lsl;
  MclConfig mcl;
  AnnealConfig anneal;
  IclslConfig iclsl;
};

// Minimizes the error scale H(lambda); unique minimizer for alpha > 1.
ExtrapSolution lsl_solve(const ExtrapProblem& problem, const LslConfig& config = {});

// Solves the covariation orthogonality system sum_i lambda_i kappa(t_i,t_j)
// = kappa(t,t_j).
ExtrapSolution col_solve(const ExtrapProblem& problem);

// Maximizes sum_i lambda_i kappa(t_i,t) subject to scale preservation, via
// ascent on the unit scale level set followed by radial rescaling.
ExtrapSolution mcl_solve(const ExtrapProblem& problem, const MclConfig& config = {});

// Tie-broken selection from the LSL global-minimum set for alpha <= 1:
// sites ordered by distance to the target, then successive coordinate
// maximization over the (annealing-approximated) minimizer set.
ExtrapSolution best_lsl_solve(const ExtrapProblem& problem,
                              const AnnealConfig& config = {});

// alpha = 1 predictor: limit of LSL solutions at indices 1 + 2^-k.
ExtrapSolution iclsl_solve(const ExtrapProblem& problem,
                           const IclslConfig& config = {});

ExtrapSolution solve_extrap(const ExtrapProblem& problem, ExtrapMethod method,
                            const SolverConfig& config = {});

// Empirical covariation [X1,X2]_alpha from paired samples via mixed moments,
// sigma2 being the known scale of the symmetric X2.
double covariation_mixed_moment_estimate(const Eigen::VectorXd& x1,
                                         const Eigen::VectorXd& x2,
                                         double alpha, double p, double sigma2);

struct ErrorProbe {
  Eigen::VectorXd target;
  double error_scale = 0.0;   // H at the re-solved weights
  double moment_scale = 0.0;  // c_alpha(p) * H, the L^p error norm
};

struct ErrorReport {
  double sup_moment_scale = 0.0;
  double p = 0.0;
  double moment_factor = 0.0;  // c_alpha(p)
  std::vector<ErrorProbe> rows;
};

// Re-solves the problem at every probe site with the solution's method and
// tabulates the prediction-error L^p norms.
ErrorReport error_report(const ExtrapProblem& problem,
                         const ExtrapSolution& solution,
                         const std::vector<Eigen::VectorXd>& probes, double p,
                         const SolverConfig& config = {});

struct ExtrapGridResult {
  GridField prediction;
  Eigen::MatrixXd weights;  // one row per grid node
  std::vector<double> objectives;
};

// Predicts on every node of the grid from observed site values; per-target
// solves are independent and deterministically seeded, so the result does
// not depend on the job count.
ExtrapGridResult extrap_grid(const ExtrapProblem& base,
                             const Eigen::VectorXd& site_values,
                             ExtrapMethod method, const GridSpec& targets,
                             const SolverConfig& config = {}, int jobs = 1);

}  // namespace stablefield
