#include "stablefield/measure.hpp"

#include <algorithm>
#include <cmath>

#include "stablefield/csv.hpp"
#include "stablefield/stable.hpp"

namespace stablefield {

MeasureSpace::MeasureSpace(Eigen::MatrixXd points, Eigen::VectorXd weights,
                           std::string descriptor)
    : points_(std::move(points)),
      weights_(std::move(weights)),
      descriptor_(std::move(descriptor)) {
  if (points_.rows() != weights_.size())
    throw DimensionMismatch("one weight per quadrature point is required");
  if (points_.rows() == 0)
    throw std::invalid_argument("measure space needs at least one point");
  if ((weights_.array() <= 0.0).any())
    throw std::invalid_argument("quadrature weights must be positive");
}

MeasureSpace MeasureSpace::box_midpoint(const Eigen::VectorXd& lo,
                                        const Eigen::VectorXd& hi,
                                        const std::vector<int>& cells) {
  const int d = static_cast<int>(lo.size());
  if (hi.size() != d || static_cast<int>(cells.size()) != d)
    throw DimensionMismatch("box corners and cell counts disagree on dimension");
  std::size_t total = 1;
  double cell_mass = 1.0;
  for (int i = 0; i < d; ++i) {
    if (cells[i] < 1) throw std::invalid_argument("cell counts must be positive");
    if (!(hi[i] > lo[i])) throw std::invalid_argument("box must be nondegenerate");
    total *= static_cast<std::size_t>(cells[i]);
    cell_mass *= (hi[i] - lo[i]) / cells[i];
  }

  Eigen::MatrixXd pts(total, d);
  std::vector<int> idx(d, 0);
  for (std::size_t r = 0; r < total; ++r) {
    for (int i = 0; i < d; ++i) {
      const double step = (hi[i] - lo[i]) / cells[i];
      pts(r, i) = lo[i] + (idx[i] + 0.5) * step;
    }
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[i] < cells[i]) break;
      idx[i] = 0;
    }
  }
  return MeasureSpace(std::move(pts),
                      Eigen::VectorXd::Constant(total, cell_mass),
                      "box_midpoint");
}

MeasureSpace MeasureSpace::decimated(std::size_t max_points) const {
  if (max_points == 0) throw std::invalid_argument("max_points must be positive");
  if (size() <= max_points) return *this;
  const std::size_t stride = (size() + max_points - 1) / max_points;
  const std::size_t kept = (size() + stride - 1) / stride;
  Eigen::MatrixXd pts(kept, dim());
  Eigen::VectorXd w(kept);
  for (std::size_t r = 0, k = 0; r < size(); r += stride, ++k) {
    pts.row(k) = points_.row(r);
    w[k] = weights_[r];
  }
  w *= total_mass() / w.sum();
  return MeasureSpace(std::move(pts), std::move(w), descriptor_ + "/decimated");
}

namespace {

void require_dim(const Eigen::VectorXd& x, int d, const char* what) {
  if (x.size() != d)
    throw DimensionMismatch(std::string(what) + " has wrong dimension");
}

}  // namespace

Kernel bisquare_kernel(int dim, double amplitude, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  return {[amplitude, radius](const Eigen::VectorXd& x) {
            const double q = x.squaredNorm() / (radius * radius);
            if (q >= 1.0) return 0.0;
            const double w = 1.0 - q;
            return amplitude * w * w;
          },
          radius, dim, "bisquare"};
}

Kernel cylinder_kernel(int dim, double radius, double height) {
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  return {[radius, height](const Eigen::VectorXd& x) {
            return x.norm() <= radius ? height : 0.0;
          },
          radius, dim, "cylinder"};
}

Kernel parabolic_kernel(int dim, double amplitude, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  return {[amplitude, radius](const Eigen::VectorXd& x) {
            const double q = x.squaredNorm() / (radius * radius);
            return q >= 1.0 ? 0.0 : amplitude * (1.0 - q);
          },
          radius, dim, "parabolic"};
}

Kernel box_kernel(int dim, double half_width, double height) {
  if (!(half_width > 0.0))
    throw std::invalid_argument("half width must be positive");
  return {[half_width, height](const Eigen::VectorXd& x) {
            return x.cwiseAbs().maxCoeff() <= half_width ? height : 0.0;
          },
          half_width * std::sqrt(static_cast<double>(dim)), dim, "box"};
}

Kernel tabulated_kernel(const std::string& csv_path) {
  const CsvTable t = read_csv_file(csv_path);
  if (t.header.size() < 2 || t.header.back() != "value")
    throw IoError("tabulated kernel needs columns x1..xd,value");
  const int d = static_cast<int>(t.header.size()) - 1;
  if (t.rows.empty()) throw IoError("tabulated kernel is empty");

  auto pts = std::make_shared<std::vector<Eigen::VectorXd>>();
  auto vals = std::make_shared<std::vector<double>>();
  double radius = 0.0;
  for (const auto& row : t.rows) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = row[i];
    pts->push_back(x);
    vals->push_back(row[d]);
    radius = std::max(radius, x.norm());
  }
  // Nearest tabulated node wins; beyond the largest typical node spacing the
  // kernel is treated as zero.
  double spacing = 0.0;
  if (pts->size() > 1) {
    double best = INFINITY;
    for (std::size_t j = 1; j < pts->size(); ++j)
      best = std::min(best, ((*pts)[j] - (*pts)[0]).norm());
    spacing = best;
  }
  const double cutoff = spacing > 0.0 ? spacing : 1e-9;
  return {[pts, vals, cutoff](const Eigen::VectorXd& x) {
            double best = INFINITY;
            double value = 0.0;
            for (std::size_t j = 0; j < pts->size(); ++j) {
              const double dist = ((*pts)[j] - x).norm();
              if (dist < best) {
                best = dist;
                value = (*vals)[j];
              }
            }
            return best <= cutoff ? value : 0.0;
          },
          radius + cutoff, d, "tabulated"};
}

KernelFamily::KernelFamily(Evaluator fn, std::string name)
    : fn_(std::move(fn)), name_(std::move(name)) {
  if (!fn_) throw std::invalid_argument("kernel evaluator must be callable");
}

KernelFamily KernelFamily::moving_average(const Kernel& base) {
  return KernelFamily(
      [base](const Eigen::VectorXd& site, const Eigen::VectorXd& point) {
        require_dim(site, static_cast<int>(point.size()), "site");
        return base(site - point);
      },
      "ma_" + base.name);
}

KernelFamily KernelFamily::levy_box() {
  return KernelFamily(
      [](const Eigen::VectorXd& site, const Eigen::VectorXd& point) {
        require_dim(site, static_cast<int>(point.size()), "site");
        for (Eigen::Index i = 0; i < site.size(); ++i) {
          const double lo = std::min(0.0, site[i]);
          const double hi = std::max(0.0, site[i]);
          if (point[i] < lo || point[i] > hi) return 0.0;
        }
        return 1.0;
      },
      "levy_box");
}

KernelFamily KernelFamily::ou(double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("rate must be positive");
  return KernelFamily(
      [lambda](const Eigen::VectorXd& site, const Eigen::VectorXd& point) {
        const double u = site[0] - point[0];
        return u >= 0.0 ? std::exp(-lambda * u) : 0.0;
      },
      "ou");
}

struct IntegralField::Cache {
  std::mutex mutex;
  std::map<std::vector<std::int64_t>, std::shared_ptr<const Eigen::VectorXd>>
      map;
};

IntegralField::IntegralField(
    KernelFamily kernels, MeasureSpace space, double alpha,
    std::function<double(const Eigen::VectorXd&)> skewness)
    : kernels_(std::move(kernels)),
      space_(std::move(space)),
      alpha_(alpha),
      skew_fn_(std::move(skewness)),
      cache_(std::make_shared<Cache>()) {
  if (!(alpha_ > 0.0 && alpha_ <= 2.0))
    throw InvalidAlpha("stability index must lie in (0, 2]");
  skew_.resize(space_.size());
  for (std::size_t j = 0; j < space_.size(); ++j) {
    const double b =
        skew_fn_ ? skew_fn_(space_.points().row(j).transpose()) : 0.0;
    if (!(b >= -1.0 && b <= 1.0))
      throw std::invalid_argument("skewness intensity must lie in [-1, 1]");
    skew_[j] = b;
  }
}

std::shared_ptr<const Eigen::VectorXd> IntegralField::kernel_vector(
    const Eigen::VectorXd& site) const {
  // Sites are kernel labels and may live in a different space than the
  // integration domain; families that subtract coordinates check for
  // themselves.
  std::vector<std::int64_t> key(site.size());
  for (Eigen::Index i = 0; i < site.size(); ++i)
    key[i] = static_cast<std::int64_t>(std::llround(site[i] * 1e12));
  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto it = cache_->map.find(key);
    if (it != cache_->map.end()) return it->second;
  }
  auto vec = std::make_shared<Eigen::VectorXd>(space_.size());
  for (std::size_t j = 0; j < space_.size(); ++j)
    (*vec)[j] = kernels_(site, space_.points().row(j).transpose());
  std::lock_guard<std::mutex> lock(cache_->mutex);
  auto [it, inserted] = cache_->map.emplace(std::move(key), std::move(vec));
  return it->second;
}

IntegralField IntegralField::with_space(MeasureSpace space) const {
  return IntegralField(kernels_, std::move(space), alpha_, skew_fn_);
}

double lalpha_norm(const Eigen::VectorXd& f, const MeasureSpace& space,
                   double alpha) {
  if (f.size() != static_cast<Eigen::Index>(space.size()))
    throw DimensionMismatch("integrand does not match the quadrature");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < f.size(); ++j)
    acc += std::pow(std::abs(f[j]), alpha) * space.weights()[j];
  return std::pow(acc, 1.0 / alpha);
}

namespace {

// Kernel of the combination sum_i weights_i f_{sites_i}.
Eigen::VectorXd combo_vector(const IntegralField& field,
                             const std::vector<Eigen::VectorXd>& sites,
                             const Eigen::VectorXd& weights) {
  if (static_cast<Eigen::Index>(sites.size()) != weights.size())
    throw DimensionMismatch("one weight per site is required");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(field.space().size());
  for (std::size_t i = 0; i < sites.size(); ++i)
    g += weights[i] * *field.kernel_vector(sites[i]);
  return g;
}

}  // namespace

double combo_scale(const IntegralField& field, const Eigen::VectorXd& target,
                   const std::vector<Eigen::VectorXd>& sites,
                   const Eigen::VectorXd& weights) {
  Eigen::VectorXd g = *field.kernel_vector(target);
  g -= combo_vector(field, sites, weights);
  return lalpha_norm(g, field.space(), field.alpha());
}

double combo_skewness(const IntegralField& field,
                      const std::vector<Eigen::VectorXd>& sites,
                      const Eigen::VectorXd& weights) {
  const Eigen::VectorXd g = combo_vector(field, sites, weights);
  const double alpha = field.alpha();
  double num = 0.0, den = 0.0;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double w = field.space().weights()[j];
    num += signed_power(g[j], alpha) * field.skew_vector()[j] * w;
    den += std::pow(std::abs(g[j]), alpha) * w;
  }
  if (den == 0.0)
    throw ZeroScale("combination vanishes on the whole quadrature");
  return num / den;
}

double covariation_integral(const IntegralField& field,
                            const Eigen::VectorXd& s,
                            const Eigen::VectorXd& t) {
  if (!(field.alpha() > 1.0))
    throw InvalidAlpha("covariation requires alpha > 1");
  const Eigen::VectorXd& fs = *field.kernel_vector(s);
  const Eigen::VectorXd& ft = *field.kernel_vector(t);
  const double p = field.alpha() - 1.0;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < fs.size(); ++j)
    acc += fs[j] * signed_power(ft[j], p) * field.space().weights()[j];
  return acc;
}

FieldSample sample_field(const IntegralField& field,
                         const std::vector<Eigen::VectorXd>& sites,
                         std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = field.space().size();
  const double inv_alpha = 1.0 / field.alpha();
  Eigen::VectorXd noise(n);
  for (std::size_t j = 0; j < n; ++j) {
    const StableParams cell(field.alpha(),
                            std::pow(field.space().weights()[j], inv_alpha),
                            field.skew_vector()[j], 0.0);
    noise[j] = sample_one(cell, rng);
  }
  FieldSample out;
  out.seed = seed;
  out.values.reserve(sites.size());
  for (const auto& site : sites)
    out.values.push_back(field.kernel_vector(site)->dot(noise));
  return out;
}

int kernel_rank(const IntegralField& field,
                const std::vector<Eigen::VectorXd>& sites, double tol) {
  if (sites.empty()) throw std::invalid_argument("kernel_rank needs sites");
  const Eigen::Index n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd a(n, field.space().size());
  const Eigen::VectorXd root_w = field.space().weights().cwiseSqrt();
  for (Eigen::Index i = 0; i < n; ++i)
    a.row(i) = field.kernel_vector(sites[i])->cwiseProduct(root_w).transpose();
  // Rank of the L2 Gram matrix of the site kernels.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a * a.transpose());
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (eig.eigenvalues()[i] > tol * top) ++rank;
  return rank;
}

bool is_full_dimensional(const IntegralField& field,
                         const std::vector<Eigen::VectorXd>& sites,
                         double tol) {
  return kernel_rank(field, sites, tol) == static_cast<int>(sites.size());
}

}  // namespace stablefield
