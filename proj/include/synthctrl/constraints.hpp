#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "synthctrl/panel.hpp"

namespace synthctrl {

enum class ConstraintFamily { Simplex, Lasso, Ridge, L1L2, Ols };

inline const char* family_name(ConstraintFamily f) {
  switch (f) {
    case ConstraintFamily::Simplex: return "simplex";
    case ConstraintFamily::Lasso: return "lasso";
    case ConstraintFamily::Ridge: return "ridge";
    case ConstraintFamily::L1L2: return "l1l2";
    case ConstraintFamily::Ols: return "ols";
  }
  return "unknown";
}

// Feasibility set for the weights of each treated unit; the coefficient
// space is always unconstrained.
struct ConstraintSpec {
  ConstraintFamily family = ConstraintFamily::Simplex;
  double q1 = 1.0;
  double q2 = 0.0;
  std::vector<double> q2_per_unit;  // optional override, one per treated unit

  double q2_for(int unit) const {
    return q2_per_unit.empty() ? q2 : q2_per_unit.at(unit);
  }

  void validate(int j_per_unit) const {
    const bool needs_q1 = family == ConstraintFamily::Simplex ||
                          family == ConstraintFamily::Lasso ||
                          family == ConstraintFamily::L1L2;
    const bool needs_q2 = family == ConstraintFamily::Ridge ||
                          family == ConstraintFamily::L1L2;
    if (needs_q1 && q1 <= 0.0)
      throw Error(ErrorCode::ConfigError, "constraint requires q1 > 0");
    if (needs_q2) {
      auto check = [&](double v) {
        if (v <= 0.0)
          throw Error(ErrorCode::ConfigError, "constraint requires q2 > 0");
        if (family == ConstraintFamily::L1L2 &&
            v < q1 / std::sqrt(static_cast<double>(j_per_unit)) - 1e-12)
          throw Error(ErrorCode::ConfigError,
                      "l1l2 needs q2 >= q1/sqrt(J) for a nonempty set");
      };
      if (q2_per_unit.empty())
        check(q2);
      else
        for (double v : q2_per_unit) check(v);
    }
  }
};

// One differentiable constraint m(beta) (= 0 or <= 0) acting on the weight
// block of a single treated unit.
struct SmoothConstraint {
  enum class Kind { SumToOne, NonNeg, L2Ball, L1Budget };
  Kind kind;
  int unit = 0;
  int coord = -1;      // NonNeg: global beta coordinate
  int w_begin = 0;     // unit weight block in beta
  int w_len = 0;
  double level = 0.0;  // q1 or q2^2 depending on kind

  double value(const VectorXd& beta) const {
    switch (kind) {
      case Kind::SumToOne:
        return beta.segment(w_begin, w_len).sum() - level;
      case Kind::NonNeg:
        return -beta(coord);
      case Kind::L2Ball:
        return beta.segment(w_begin, w_len).squaredNorm() - level;
      case Kind::L1Budget:
        return beta.segment(w_begin, w_len).cwiseAbs().sum() - level;
    }
    return 0.0;
  }

  // For the L1 budget this is the orthant-wise gradient at the evaluation
  // point (sign pattern frozen, zeros counted with unit magnitude); it is
  // used only for the rho / epsilon bookkeeping.
  VectorXd gradient(const VectorXd& beta) const {
    VectorXd g = VectorXd::Zero(beta.size());
    switch (kind) {
      case Kind::SumToOne:
        g.segment(w_begin, w_len).setOnes();
        break;
      case Kind::NonNeg:
        g(coord) = -1.0;
        break;
      case Kind::L2Ball:
        g.segment(w_begin, w_len) = 2.0 * beta.segment(w_begin, w_len);
        break;
      case Kind::L1Budget:
        for (int j = 0; j < w_len; ++j)
          g(w_begin + j) = beta(w_begin + j) < 0.0 ? -1.0 : 1.0;
        break;
    }
    return g;
  }

  // largest singular value of the Hessian (constant for these families)
  double hessian_opnorm() const {
    return kind == Kind::L2Ball ? 2.0 : 0.0;
  }
  bool linear() const { return kind != Kind::L2Ball; }
};

struct SmoothConstraints {
  int d = 0;
  std::vector<SmoothConstraint> eq;
  std::vector<SmoothConstraint> ineq;
  std::vector<std::vector<int>> unit_ineq;  // S^{[i]}: ineq indices per unit
  ConstraintFamily family = ConstraintFamily::Ols;
};

// Constraint-function representation of W x R for one family.
inline SmoothConstraints to_smooth(const ConstraintSpec& spec,
                                   const BetaLayout& layout) {
  SmoothConstraints out;
  out.d = layout.d;
  out.family = spec.family;
  const int n1 = static_cast<int>(layout.w_offset.size());
  out.unit_ineq.resize(n1);
  for (int i = 0; i < n1; ++i) {
    const int wb = layout.w_offset[i];
    const int wl = layout.w_len[i];
    spec.validate(wl);
    auto push_ineq = [&](SmoothConstraint c) {
      out.unit_ineq[i].push_back(static_cast<int>(out.ineq.size()));
      out.ineq.push_back(std::move(c));
    };
    switch (spec.family) {
      case ConstraintFamily::Simplex:
      case ConstraintFamily::L1L2:
        out.eq.push_back({SmoothConstraint::Kind::SumToOne, i, -1, wb, wl,
                          spec.family == ConstraintFamily::Simplex ? 1.0
                                                                   : spec.q1});
        for (int j = 0; j < wl; ++j)
          push_ineq({SmoothConstraint::Kind::NonNeg, i, wb + j, wb, wl, 0.0});
        if (spec.family == ConstraintFamily::L1L2)
          push_ineq({SmoothConstraint::Kind::L2Ball, i, -1, wb, wl,
                     spec.q2_for(i) * spec.q2_for(i)});
        break;
      case ConstraintFamily::Lasso:
        push_ineq({SmoothConstraint::Kind::L1Budget, i, -1, wb, wl, spec.q1});
        break;
      case ConstraintFamily::Ridge:
        push_ineq({SmoothConstraint::Kind::L2Ball, i, -1, wb, wl,
                   spec.q2_for(i) * spec.q2_for(i)});
        break;
      case ConstraintFamily::Ols:
        break;
      default:
        throw Error(ErrorCode::UnsupportedFamily, "unsupported constraint family");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tuning parameters

// rho^{[i]} = C log(T0)^c / sqrt(T0)
inline double rho_formula(double c_const, int t0, double c_exp) {
  return c_const * std::pow(std::log(static_cast<double>(t0)), c_exp) /
         std::sqrt(static_cast<double>(t0));
}

enum class RhoConstant { C1, C2, C3 };

struct RhoTuning {
  std::vector<double> rho_unit;  // per treated unit
  std::vector<double> rho_ineq;  // aligned with SmoothConstraints::ineq
  std::vector<std::string> notes;
};

// Data-driven rho per treated unit from the pre-treatment residual and donor
// scales, and per-constraint rho_j = ||grad m_j(beta_hat)||_1 * rho^{[i]}.
inline RhoTuning tune_rho(const DesignMatrices& design,
                          const SmoothConstraints& smooth,
                          const VectorXd& beta_hat, const VectorXd& u_hat,
                          bool cointegrated,
                          RhoConstant choice = RhoConstant::C1) {
  RhoTuning out;
  const double c_exp = cointegrated ? 1.0 : 0.5;
  const int n1 = design.n_treated();
  for (int i = 0; i < n1; ++i) {
    const auto [lo, hi] = design.unit_rows(i);
    const int n = hi - lo;
    if (n < 2)
      throw Error(ErrorCode::DegenerateScale,
                  "need at least two pre-treatment rows to tune rho");
    auto sd = [&](const VectorXd& v) {
      const double mean = v.mean();
      return std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
    };
    const VectorXd u = u_hat.segment(lo, n);
    const double sigma_u = sd(u);
    double min_sb = std::numeric_limits<double>::infinity();
    double max_sb = 0.0, max_cov = 0.0;
    const int wb = design.layout.w_offset[i];
    for (int j = 0; j < design.layout.w_len[i]; ++j) {
      const VectorXd bj = design.B.col(wb + j).segment(lo, n);
      const double s = sd(bj);
      min_sb = std::min(min_sb, s);
      max_sb = std::max(max_sb, s);
      const double cov =
          ((bj.array() - bj.mean()) * (u.array() - u.mean())).sum() / (n - 1);
      max_cov = std::max(max_cov, std::abs(cov));
    }
    if (min_sb <= 0.0)
      throw Error(ErrorCode::DegenerateScale,
                  "a donor column of unit '" + design.treated[i] +
                      "' has zero variance");
    double c_const = 0.0;
    switch (choice) {
      case RhoConstant::C1: c_const = sigma_u / min_sb; break;
      case RhoConstant::C2: c_const = max_sb * sigma_u / (min_sb * min_sb); break;
      case RhoConstant::C3: c_const = max_cov / (min_sb * min_sb); break;
    }
    out.rho_unit.push_back(rho_formula(c_const, design.t0[i], c_exp));
  }
  out.rho_ineq.resize(smooth.ineq.size());
  for (size_t j = 0; j < smooth.ineq.size(); ++j) {
    const auto& con = smooth.ineq[j];
    const double grad_l1 = con.gradient(beta_hat).cwiseAbs().sum();
    out.rho_ineq[j] = grad_l1 * out.rho_unit[con.unit];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Relaxed constraint set Delta*

// Centered relaxation of W x R around beta_hat: equalities are kept, the
// inequality constraints within rho_j of binding keep their current level,
// the rest keep the original level. delta = 0 is always a member.
struct RelaxedSet {
  VectorXd beta_hat;
  SmoothConstraints constraints;
  std::vector<bool> active;   // per inequality
  std::vector<double> rhs;    // per inequality: m(beta_hat + delta) <= rhs
  std::vector<std::string> warnings;

  bool contains(const VectorXd& delta, double tol = 1e-9) const {
    const VectorXd beta = beta_hat + delta;
    for (const auto& con : constraints.eq)
      if (std::abs(con.value(beta)) > tol) return false;
    for (size_t j = 0; j < constraints.ineq.size(); ++j)
      if (constraints.ineq[j].value(beta) > rhs[j] + tol) return false;
    return true;
  }

  int active_count() const {
    int n = 0;
    for (bool a : active) n += a ? 1 : 0;
    return n;
  }
};

inline RelaxedSet relax(const SmoothConstraints& smooth, const VectorXd& beta_hat,
                        const std::vector<double>& rho_ineq,
                        double feas_slack = 1e-7) {
  RelaxedSet out;
  out.beta_hat = beta_hat;
  out.constraints = smooth;
  for (const auto& con : smooth.eq)
    if (std::abs(con.value(beta_hat)) > feas_slack)
      throw Error(ErrorCode::NumericalFailure,
                  "beta_hat violates an equality constraint beyond slack");
  for (size_t j = 0; j < smooth.ineq.size(); ++j) {
    const double m = smooth.ineq[j].value(beta_hat);
    if (m > feas_slack)
      throw Error(ErrorCode::NumericalFailure,
                  "beta_hat violates an inequality constraint beyond slack");
    const bool is_active = m > -rho_ineq.at(j);
    out.active.push_back(is_active);
    out.rhs.push_back(is_active ? m : 0.0);
    if (!is_active && rho_ineq[j] > std::abs(m))
      out.warnings.push_back("rho_" + std::to_string(j) +
                             " exceeds |m_j(beta_hat)| outside the active set");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curvature adjustment epsilon_Delta

struct EpsilonDelta {
  double value = 0.0;
  std::vector<std::string> notes;
};

// Widening constant for nonlinear constraint sets; exactly zero when every
// constraint of the involved units is linear.
inline EpsilonDelta epsilon_delta(const SmoothConstraints& smooth,
                                  const VectorXd& beta_hat,
                                  const VectorXd& p_tau,
                                  const std::vector<double>& rho_unit,
                                  const std::vector<int>& predictand_units,
                                  const BetaLayout& layout) {
  EpsilonDelta out;
  for (int i : predictand_units) {
    const auto& idx = smooth.unit_ineq.at(i);
    if (idx.empty()) continue;
    double max_hess = 0.0;
    for (int j : idx) max_hess = std::max(max_hess, smooth.ineq[j].hessian_opnorm());
    if (max_hess == 0.0) continue;  // all linear
    // ||p_tau^{[i]}||_1 over the unit's beta block
    double p_l1 = p_tau.segment(layout.w_offset[i], layout.w_len[i])
                      .cwiseAbs()
                      .sum() +
                  p_tau.segment(layout.r_offset[i], layout.r_len[i])
                      .cwiseAbs()
                      .sum();
    // Jacobian of the unit's inequality constraints on its weight block
    MatrixXd jac(static_cast<int>(idx.size()), layout.w_len[i]);
    for (size_t r = 0; r < idx.size(); ++r)
      jac.row(static_cast<int>(r)) = smooth.ineq[idx[r]]
                                         .gradient(beta_hat)
                                         .segment(layout.w_offset[i],
                                                  layout.w_len[i])
                                         .transpose();
    Eigen::JacobiSVD<MatrixXd> svd(jac);
    const double s_min = svd.singularValues().minCoeff();
    if (s_min <= 1e-300) {
      out.value = std::numeric_limits<double>::infinity();
      out.notes.push_back("singular constraint Jacobian for unit " +
                          std::to_string(i) + "; epsilon_Delta set to +inf");
      return out;
    }
    const double rho = rho_unit.at(i);
    out.value += p_l1 * (std::sqrt(static_cast<double>(idx.size())) / 2.0) *
                 (1.0 / s_min) * max_hess * rho * rho;
  }
  return out;
}

// Simultaneous version: the per-period constants are maxed.
inline double epsilon_delta_simultaneous(const std::vector<double>& per_period) {
  double m = 0.0;
  for (double v : per_period) m = std::max(m, v);
  return m;
}

}  // namespace synthctrl
