#pragma once

// Test-only reference solvers, independent of the conic implementation:
// projected-gradient descent with exact (or Dykstra) projections onto the
// constraint families, and closed forms where available.

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "synthctrl/constraints.hpp"

namespace synthctrl::testing {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd project_simplex(const VectorXd& v, double total = 1.0) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  int k = 0;
  for (int i = 0; i < n; ++i) {
    cum += u[i];
    const double t = (cum - total) / (i + 1);
    if (u[i] - t > 0.0) {
      theta = t;
      k = i + 1;
    }
  }
  (void)k;
  return (v.array() - theta).max(0.0);
}

inline VectorXd project_l2_ball(const VectorXd& v, double radius) {
  const double n = v.norm();
  return n <= radius ? v : VectorXd(v * (radius / n));
}

inline VectorXd project_l1_ball(const VectorXd& v, double radius) {
  if (v.cwiseAbs().sum() <= radius) return v;
  const VectorXd mag = project_simplex(v.cwiseAbs(), radius);
  return mag.cwiseProduct(v.cwiseSign());
}

// Dykstra's alternating projections onto simplex(q1) intersect l2-ball(q2).
inline VectorXd project_l1l2(const VectorXd& v, double q1, double q2,
                             int iters = 200) {
  VectorXd x = v;
  VectorXd p = VectorXd::Zero(v.size());
  VectorXd q = VectorXd::Zero(v.size());
  for (int i = 0; i < iters; ++i) {
    const VectorXd y = project_simplex(x + p, q1);
    p = x + p - y;
    x = project_l2_ball(y + q, q2);
    q = y + q - x;
  }
  return x;
}

inline VectorXd project_family(const VectorXd& w, ConstraintFamily family,
                               double q1, double q2) {
  switch (family) {
    case ConstraintFamily::Simplex: return project_simplex(w, 1.0);
    case ConstraintFamily::Lasso: return project_l1_ball(w, q1);
    case ConstraintFamily::Ridge: return project_l2_ball(w, q2);
    case ConstraintFamily::L1L2: return project_l1l2(w, q1, q2);
    case ConstraintFamily::Ols: return w;
  }
  return w;
}

// Reference objective minimizer for one treated unit:
//   min (A - Zb)' V (A - Zb),  w-block constrained, r-block free.
inline double pgd_fit_objective(const MatrixXd& z, const VectorXd& a,
                                const MatrixXd& v, int j,
                                ConstraintFamily family, double q1, double q2,
                                int iters = 120000) {
  const MatrixXd q = z.transpose() * v * z;
  const VectorXd b = z.transpose() * v * a;
  const double c0 = a.dot(v * a);
  const int d = static_cast<int>(z.cols());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(q);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double step = 1.0 / (2.0 * lmax);
  VectorXd beta = VectorXd::Zero(d);
  if (family != ConstraintFamily::Ols)
    beta.head(j) = project_family(VectorXd::Zero(j), family, q1, q2);
  for (int it = 0; it < iters; ++it) {
    const VectorXd grad = 2.0 * (q * beta - b);
    VectorXd next = beta - step * grad;
    next.head(j) = project_family(next.head(j), family, q1, q2);
    beta = next;
  }
  return beta.dot(q * beta) - 2.0 * b.dot(beta) + c0;
}

// Random feasible point of a family (for optimality-certificate checks).
template <typename Rng>
VectorXd random_feasible_w(Rng& rng, int j, ConstraintFamily family, double q1,
                           double q2) {
  VectorXd w(j);
  for (int i = 0; i < j; ++i) w(i) = 2.0 * rng.next_uniform() - 1.0;
  switch (family) {
    case ConstraintFamily::Simplex: {
      for (int i = 0; i < j; ++i) w(i) = rng.next_uniform() + 1e-3;
      w /= w.sum();
      return w;
    }
    case ConstraintFamily::Lasso: return project_l1_ball(w, q1);
    case ConstraintFamily::Ridge: return project_l2_ball(w, q2);
    case ConstraintFamily::L1L2: {
      for (int i = 0; i < j; ++i) w(i) = rng.next_uniform() + 1e-3;
      w /= w.sum();
      return project_l1l2(w, q1, q2);
    }
    case ConstraintFamily::Ols: return w;
  }
  return w;
}

}  // namespace synthctrl::testing
