#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "stablefield/errors.hpp"
#include "stablefield/rng.hpp"

// Discretized stable random measures: quadrature spaces (E, m), kernel
// families f_t, and the integral-representation operations (scales,
// skewness, covariation, sampling, dimensionality checks).

namespace stablefield {

// Finite quadrature approximation of a measure space: points x_j with
// positive weights m_j. Points are stored one per row.
class MeasureSpace {
 public:
  MeasureSpace(Eigen::MatrixXd points, Eigen::VectorXd weights,
               std::string descriptor = "");

  // Midpoint rule on the box [lo, hi] with cells[i] cells along axis i.
  static MeasureSpace box_midpoint(const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi,
                                   const std::vector<int>& cells);

  // Strided thinning to at most max_points points, rescaled to keep the
  // total mass; used by coarse search stages, never for final values.
  MeasureSpace decimated(std::size_t max_points) const;

  int dim() const { return static_cast<int>(points_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  const Eigen::MatrixXd& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double total_mass() const { return weights_.sum(); }
  const std::string& descriptor() const { return descriptor_; }

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
  std::string descriptor_;
};

// Deterministic integrand f: R^d -> R with bounded support, used as a
// moving-average or shot-noise kernel.
struct Kernel {
  std::function<double(const Eigen::VectorXd&)> fn;
  double support_radius;
  int dim;
  std::string name;

  double operator()(const Eigen::VectorXd& x) const { return fn(x); }
};

Kernel bisquare_kernel(int dim, double amplitude = 15.0 / 16.0,
                       double radius = 1.0);
Kernel cylinder_kernel(int dim, double radius, double height = 1.0);
// amplitude * (1 - (||x||/radius)^2) on the ball of the given radius.
Kernel parabolic_kernel(int dim, double amplitude, double radius);
Kernel box_kernel(int dim, double half_width, double height = 1.0);
// Values tabulated on a regular grid (CSV columns x1..xd,value); evaluation
// snaps to the nearest grid node and is zero outside the table.
Kernel tabulated_kernel(const std::string& csv_path);

// Family of kernels t -> f_t(.).
class KernelFamily {
 public:
  using Evaluator = std::function<double(const Eigen::VectorXd& site,
                                         const Eigen::VectorXd& point)>;

  KernelFamily(Evaluator fn, std::string name);

  // f_t(x) = base(t - x).
  static KernelFamily moving_average(const Kernel& base);
  // f_t(x) = indicator of the axis box spanned by the origin and t.
  static KernelFamily levy_box();
  // f_t(x) = exp(-lambda (t - x)) for x <= t, one-dimensional.
  static KernelFamily ou(double lambda);

  double operator()(const Eigen::VectorXd& site,
                    const Eigen::VectorXd& point) const {
    return fn_(site, point);
  }
  const std::string& name() const { return name_; }

 private:
  Evaluator fn_;
  std::string name_;
};

// Stable integral process X(t) = int f_t dM over the discretized space,
// with stability index alpha and a pointwise skewness intensity beta(x).
class IntegralField {
 public:
  IntegralField(KernelFamily kernels, MeasureSpace space, double alpha,
                std::function<double(const Eigen::VectorXd&)> skewness = {});

  double alpha() const { return alpha_; }
  const MeasureSpace& space() const { return space_; }
  const KernelFamily& kernels() const { return kernels_; }
  const Eigen::VectorXd& skew_vector() const { return skew_; }

  // Kernel values over the quadrature points, memoized per site (keyed by
  // the coordinates rounded to 1e-12).
  std::shared_ptr<const Eigen::VectorXd> kernel_vector(
      const Eigen::VectorXd& site) const;

  // Same kernels, index and skewness on a different quadrature.
  IntegralField with_space(MeasureSpace space) const;

 private:
  struct Cache;
  KernelFamily kernels_;
  MeasureSpace space_;
  double alpha_;
  std::function<double(const Eigen::VectorXd&)> skew_fn_;
  Eigen::VectorXd skew_;
  std::shared_ptr<Cache> cache_;  // shared between copies of the same field
};

// (sum_j |f_j|^alpha m_j)^(1/alpha).
double lalpha_norm(const Eigen::VectorXd& f, const MeasureSpace& space,
                   double alpha);

// Scale parameter of X(target) - sum_i weights_i X(sites_i).
double combo_scale(const IntegralField& field, const Eigen::VectorXd& target,
                   const std::vector<Eigen::VectorXd>& sites,
                   const Eigen::VectorXd& weights);

// Skewness parameter of sum_i weights_i X(sites_i); ZeroScale when the
// combination vanishes m-a.e.
double combo_skewness(const IntegralField& field,
                      const std::vector<Eigen::VectorXd>& sites,
                      const Eigen::VectorXd& weights);

// Covariation [X(s), X(t)]_alpha = int f_s f_t^{<alpha-1>} dm; alpha > 1.
double covariation_integral(const IntegralField& field,
                            const Eigen::VectorXd& s,
                            const Eigen::VectorXd& t);

struct FieldSample {
  std::vector<double> values;
  std::uint64_t seed;
};

// One realization of (X(site))_sites sharing a single draw of the
// discretized random measure.
FieldSample sample_field(const IntegralField& field,
                         const std::vector<Eigen::VectorXd>& sites,
                         std::uint64_t seed);

// Rank of the L2 Gram matrix of the site kernels on the quadrature
// (eigenvalues above tol relative to the largest).
int kernel_rank(const IntegralField& field,
                const std::vector<Eigen::VectorXd>& sites, double tol = 1e-10);

// True when no nontrivial combination of the site kernels vanishes m-a.e.
bool is_full_dimensional(const IntegralField& field,
                         const std::vector<Eigen::VectorXd>& sites,
                         double tol = 1e-10);

}  // namespace stablefield
