#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

// Internal derivative-free simplex minimizer shared by the variogram fit and
// the best-LSL polish stages. Not installed.

namespace stablefield::detail {

inline Eigen::VectorXd nelder_mead(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, double initial_step, int max_iter, double tol,
    int* iterations = nullptr) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(x0);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd p = x0;
    p(i) += initial_step;
    pts.push_back(p);
  }
  for (const auto& p : pts) vals.push_back(f(p));

  int it = 0;
  for (; it < max_iter; ++it) {
    std::vector<int> order(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      order[i] = static_cast<int>(i);
    }
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return vals[a] < vals[b]; });
    std::vector<Eigen::VectorXd> spts;
    std::vector<double> svals;
    for (int i : order) {
      spts.push_back(pts[i]);
      svals.push_back(vals[i]);
    }
    pts = std::move(spts);
    vals = std::move(svals);

    if (std::abs(vals.back() - vals.front()) <=
        tol * (1.0 + std::abs(vals.front()))) {
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd worst = pts.back();
    const Eigen::VectorXd refl = centroid + (centroid - worst);
    const double f_refl = f(refl);
    if (f_refl < vals.front()) {
      const Eigen::VectorXd expd = centroid + 2.0 * (centroid - worst);
      const double f_expd = f(expd);
      if (f_expd < f_refl) {
        pts.back() = expd;
        vals.back() = f_expd;
      } else {
        pts.back() = refl;
        vals.back() = f_refl;
      }
    } else if (f_refl < vals[vals.size() - 2]) {
      pts.back() = refl;
      vals.back() = f_refl;
    } else {
      const Eigen::VectorXd contr = centroid + 0.5 * (worst - centroid);
      const double f_contr = f(contr);
      if (f_contr < vals.back()) {
        pts.back() = contr;
        vals.back() = f_contr;
      } else {
        for (std::size_t i = 1; i < pts.size(); ++i) {
          pts[i] = pts.front() + 0.5 * (pts[i] - pts.front());
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  if (iterations) *iterations = it;
  int best = 0;
  for (std::size_t i = 1; i < vals.size(); ++i) {
    if (vals[i] < vals[best]) best = static_cast<int>(i);
  }
  return pts[best];
}

}  // namespace stablefield::detail
