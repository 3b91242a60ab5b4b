#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "synthctrl/errors.hpp"

namespace synthctrl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ConeKind { Orthant, Soc };

struct ConeBlock {
  ConeKind kind;
  int dim;
};

// Canonical form: min c'x  s.t.  A_eq x = b_eq,  h - G x in K,
// K an ordered product of nonnegative-orthant and second-order-cone blocks.
struct ConicProgram {
  VectorXd c;
  MatrixXd A_eq;  // p x n (p may be 0)
  VectorXd b_eq;
  MatrixXd G;  // m x n
  VectorXd h;
  std::vector<ConeBlock> cones;
  std::vector<std::string> labels;  // one per variable

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_eq() const { return static_cast<int>(b_eq.size()); }
  int num_cone_rows() const { return static_cast<int>(h.size()); }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIter: return "max_iter";
  }
  return "unknown";
}

struct ConicSolution {
  VectorXd x;
  VectorXd y;  // equality duals
  VectorXd z;  // cone duals
  VectorXd s;  // cone slacks, s = h - Gx at the solution
  SolveStatus status = SolveStatus::MaxIter;
  double primal_res = std::numeric_limits<double>::quiet_NaN();
  double dual_res = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  double wall_time = 0.0;
};

struct SolverSettings {
  double tol_feas = 1e-8;
  double tol_gap = 1e-8;
  int max_iter = 200;
  double step_fraction = 0.99;
  double static_reg = 1e-10;
};

// Per-block cone violation of v (0 when v is inside K).
inline double cone_violation(const std::vector<ConeBlock>& cones,
                             const VectorXd& v) {
  double worst = 0.0;
  int at = 0;
  for (const auto& blk : cones) {
    if (blk.kind == ConeKind::Orthant) {
      for (int i = 0; i < blk.dim; ++i) worst = std::max(worst, -v(at + i));
    } else {
      const double res =
          v(at) - v.segment(at + 1, blk.dim - 1).norm();
      worst = std::max(worst, -res);
    }
    at += blk.dim;
  }
  return worst;
}

namespace detail {

inline int cone_degree(const std::vector<ConeBlock>& cones) {
  int nu = 0;
  for (const auto& blk : cones)
    nu += (blk.kind == ConeKind::Orthant) ? blk.dim : 1;
  return nu;
}

inline VectorXd cone_identity(const std::vector<ConeBlock>& cones, int m) {
  VectorXd e = VectorXd::Zero(m);
  int at = 0;
  for (const auto& blk : cones) {
    if (blk.kind == ConeKind::Orthant)
      e.segment(at, blk.dim).setOnes();
    else
      e(at) = 1.0;
    at += blk.dim;
  }
  return e;
}

// Shift v along the cone identity until it is strictly interior.
inline void bring_to_cone(const std::vector<ConeBlock>& cones, VectorXd& v) {
  const double viol = cone_violation(cones, v);
  if (viol >= -0.9) {  // also nudge points too close to the boundary
    v += (viol + 1.0) * cone_identity(cones, static_cast<int>(v.size()));
  }
}

// Largest t >= 0 with u + t*du staying in the cone (inf if unconstrained).
inline double max_step(const std::vector<ConeBlock>& cones, const VectorXd& u,
                       const VectorXd& du) {
  const double inf = std::numeric_limits<double>::infinity();
  double t = inf;
  int at = 0;
  for (const auto& blk : cones) {
    if (blk.kind == ConeKind::Orthant) {
      for (int i = 0; i < blk.dim; ++i)
        if (du(at + i) < 0.0) t = std::min(t, -u(at + i) / du(at + i));
    } else {
      const auto u1 = u.segment(at + 1, blk.dim - 1);
      const auto d1 = du.segment(at + 1, blk.dim - 1);
      const double a = du(at) * du(at) - d1.squaredNorm();
      const double b = u(at) * du(at) - u1.dot(d1);
      const double cq = u(at) * u(at) - u1.squaredNorm();
      // smallest positive root of a t^2 + 2 b t + c = 0
      double root = inf;
      if (std::abs(a) > 1e-14) {
        const double disc = b * b - a * cq;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          const double r1 = (-b - sq) / a;
          const double r2 = (-b + sq) / a;
          const double lo = std::min(r1, r2), hi = std::max(r1, r2);
          if (lo > 0.0)
            root = lo;
          else if (hi > 0.0)
            root = hi;
        }
      } else if (b < 0.0) {
        root = -cq / (2.0 * b);
      }
      if (du(at) < 0.0) root = std::min(root, -u(at) / du(at));
      t = std::min(t, root);
    }
    at += blk.dim;
  }
  return t;
}

// Nesterov-Todd scaling for the orthant x SOC product.
struct NtScaling {
  // orthant: pointwise w; SOC: scaling point w (det = eta^2) and its
  // Jordan square root q (det = eta)
  VectorXd orthant_w;  // full m, only orthant rows used
  std::vector<VectorXd> soc_w;
  std::vector<VectorXd> soc_q;
  std::vector<double> soc_eta;
};

inline bool update_scaling(const std::vector<ConeBlock>& cones,
                           const VectorXd& s, const VectorXd& z,
                           NtScaling& W, VectorXd& lambda) {
  const int m = static_cast<int>(s.size());
  W.orthant_w = VectorXd::Zero(m);
  W.soc_w.clear();
  W.soc_q.clear();
  W.soc_eta.clear();
  lambda.resize(m);
  int at = 0;
  for (const auto& blk : cones) {
    if (blk.kind == ConeKind::Orthant) {
      for (int i = 0; i < blk.dim; ++i) {
        const double si = s(at + i), zi = z(at + i);
        if (si <= 0.0 || zi <= 0.0) return false;
        W.orthant_w(at + i) = std::sqrt(si / zi);
        lambda(at + i) = std::sqrt(si * zi);
      }
    } else {
      const int d = blk.dim;
      const auto sb = s.segment(at, d);
      const auto zb = z.segment(at, d);
      const double sdet =
          sb(0) * sb(0) - sb.tail(d - 1).squaredNorm();
      const double zdet =
          zb(0) * zb(0) - zb.tail(d - 1).squaredNorm();
      if (sdet <= 0.0 || zdet <= 0.0 || sb(0) <= 0.0 || zb(0) <= 0.0)
        return false;
      const double snorm = std::sqrt(sdet), znorm = std::sqrt(zdet);
      VectorXd sbar = sb / snorm, zbar = zb / znorm;
      double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
      VectorXd wbar(d);
      wbar(0) = (sbar(0) + zbar(0)) / (2.0 * gamma);
      wbar.tail(d - 1) =
          (sbar.tail(d - 1) - zbar.tail(d - 1)) / (2.0 * gamma);
      const double eta = std::sqrt(snorm / znorm);
      VectorXd w = eta * wbar;  // det(w) = eta^2
      // Jordan square root: q0 = sqrt((w0 + eta)/2), q1 = w1/(2 q0)
      VectorXd q(d);
      q(0) = std::sqrt(0.5 * (w(0) + eta));
      q.tail(d - 1) = w.tail(d - 1) / (2.0 * q(0));
      W.soc_w.push_back(std::move(w));
      W.soc_q.push_back(std::move(q));
      W.soc_eta.push_back(eta);
      // lambda = W z computed below
    }
    at += blk.dim;
  }
  // lambda for SOC blocks: W z = 2 q (q'z) - eta J z
  at = 0;
  int si = 0;
  for (const auto& blk : cones) {
    if (blk.kind == ConeKind::Soc) {
      const int d = blk.dim;
      const auto& q = W.soc_q[si];
      const double eta = W.soc_eta[si];
      const auto zb = z.segment(at, d);
      const double qz = q.dot(zb);
      lambda.segment(at, d) = 2.0 * qz * q;
      lambda(at) -= eta * zb(0);
      lambda.segment(at + 1, d - 1) += eta * zb.tail(d - 1);
      ++si;
    }
    at += blk.dim;
  }
  return true;
}

enum class ScaleOp { W, Winv, Wsq, WinvSq };

// Apply the NT scaling (or its inverse/square) blockwise.
inline VectorXd apply_scaling(const std::vector<ConeBlock>& cones,
                              const NtScaling& W, ScaleOp op,
                              const VectorXd& v) {
  VectorXd out(v.size());
  int at = 0, si = 0;
  for (const auto& blk : cones) {
    if (blk.kind == ConeKind::Orthant) {
      for (int i = 0; i < blk.dim; ++i) {
        const double w = W.orthant_w(at + i);
        double f = w;
        if (op == ScaleOp::Winv) f = 1.0 / w;
        if (op == ScaleOp::Wsq) f = w * w;
        if (op == ScaleOp::WinvSq) f = 1.0 / (w * w);
        out(at + i) = f * v(at + i);
      }
    } else {
      const int d = blk.dim;
      const auto vb = v.segment(at, d);
      const auto& w = W.soc_w[si];
      const auto& q = W.soc_q[si];
      const double eta = W.soc_eta[si];
      VectorXd jv(d);  // J v
      jv(0) = vb(0);
      jv.tail(d - 1) = -vb.tail(d - 1);
      VectorXd r(d);
      switch (op) {
        case ScaleOp::W:  // P(q) v = 2 q (q'v) - eta Jv
          r = 2.0 * q.dot(vb) * q - eta * jv;
          break;
        case ScaleOp::Winv: {  // P(q^{-1}) v, q^{-1} = Jq / eta
          VectorXd jq(d);
          jq(0) = q(0);
          jq.tail(d - 1) = -q.tail(d - 1);
          r = (2.0 / (eta * eta)) * jq.dot(vb) * jq - (1.0 / eta) * jv;
          break;
        }
        case ScaleOp::Wsq:  // P(w) v
          r = 2.0 * w.dot(vb) * w - (eta * eta) * jv;
          break;
        case ScaleOp::WinvSq: {  // P(w^{-1}) v, w^{-1} = Jw / eta^2
          VectorXd jw(d);
          jw(0) = w(0);
          jw.tail(d - 1) = -w.tail(d - 1);
          const double e2 = eta * eta;
          r = (2.0 / (e2 * e2)) * jw.dot(vb) * jw - (1.0 / e2) * jv;
          break;
        }
      }
      out.segment(at, d) = r;
      ++si;
    }
    at += blk.dim;
  }
  return out;
}

inline VectorXd jordan_prod(const std::vector<ConeBlock>& cones,
                            const VectorXd& u, const VectorXd& v) {
  VectorXd out(u.size());
  int at = 0;
  for (const auto& blk : cones) {
    if (blk.kind == ConeKind::Orthant) {
      out.segment(at, blk.dim) =
          u.segment(at, blk.dim).cwiseProduct(v.segment(at, blk.dim));
    } else {
      const int d = blk.dim;
      const auto ub = u.segment(at, d);
      const auto vb = v.segment(at, d);
      out(at) = ub.dot(vb);
      out.segment(at + 1, d - 1) =
          ub(0) * vb.tail(d - 1) + vb(0) * ub.tail(d - 1);
    }
    at += blk.dim;
  }
  return out;
}

// Solve lambda o v = x blockwise.
inline VectorXd jordan_div(const std::vector<ConeBlock>& cones,
                           const VectorXd& lambda, const VectorXd& x) {
  VectorXd out(x.size());
  int at = 0;
  for (const auto& blk : cones) {
    if (blk.kind == ConeKind::Orthant) {
      out.segment(at, blk.dim) =
          x.segment(at, blk.dim).cwiseQuotient(lambda.segment(at, blk.dim));
    } else {
      const int d = blk.dim;
      const auto lb = lambda.segment(at, d);
      const auto xb = x.segment(at, d);
      const double det = lb(0) * lb(0) - lb.tail(d - 1).squaredNorm();
      const double v0 = (lb(0) * xb(0) - lb.tail(d - 1).dot(xb.tail(d - 1))) / det;
      out(at) = v0;
      out.segment(at + 1, d - 1) =
          (xb.tail(d - 1) - v0 * lb.tail(d - 1)) / lb(0);
    }
    at += blk.dim;
  }
  return out;
}

// Factorized KKT system
//   [0  A' G'] [dx]   [bx]
//   [A  0  0 ] [dy] = [by]
//   [G  0 -W2] [dz]   [bz]
// solved by reduction to H = G' W^{-2} G (+ static regularization) and a
// Schur complement for the equality block, with iterative refinement.
class KktSolver {
 public:
  KktSolver(const ConicProgram& prog, double reg) : prog_(prog), reg_(reg) {}

  void factor(const NtScaling& W) {
    W_ = &W;
    const int n = prog_.num_vars();
    const int p = prog_.num_eq();
    MatrixXd WinvSqG(prog_.G.rows(), n);
    for (int j = 0; j < n; ++j)
      WinvSqG.col(j) =
          apply_scaling(prog_.cones, W, ScaleOp::WinvSq, prog_.G.col(j));
    MatrixXd H = prog_.G.transpose() * WinvSqG;
    H.diagonal().array() += reg_;
    llt_h_.compute(H);
    if (llt_h_.info() != Eigen::Success)
      throw Error(ErrorCode::NumericalFailure, "KKT factorization failed");
    if (p > 0) {
      v_ = llt_h_.solve(prog_.A_eq.transpose());
      MatrixXd S = prog_.A_eq * v_;
      S.diagonal().array() += reg_;
      llt_s_.compute(S);
      if (llt_s_.info() != Eigen::Success)
        throw Error(ErrorCode::NumericalFailure, "Schur factorization failed");
    }
  }

  void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz,
             VectorXd& dx, VectorXd& dy, VectorXd& dz) const {
    solve_once(bx, by, bz, dx, dy, dz);
    // two refinement sweeps against the unregularized system
    for (int sweep = 0; sweep < 2; ++sweep) {
      VectorXd rx = bx - prog_.G.transpose() * dz;
      if (prog_.num_eq() > 0) rx -= prog_.A_eq.transpose() * dy;
      VectorXd ry = by;
      if (prog_.num_eq() > 0) ry -= prog_.A_eq * dx;
      VectorXd rz =
          bz - prog_.G * dx + apply_scaling(prog_.cones, *W_, ScaleOp::Wsq, dz);
      VectorXd cx, cy, cz;
      solve_once(rx, ry, rz, cx, cy, cz);
      dx += cx;
      if (prog_.num_eq() > 0) dy += cy;
      dz += cz;
    }
  }

 private:
  void solve_once(const VectorXd& bx, const VectorXd& by, const VectorXd& bz,
                  VectorXd& dx, VectorXd& dy, VectorXd& dz) const {
    const VectorXd r1 =
        bx + prog_.G.transpose() *
                 apply_scaling(prog_.cones, *W_, ScaleOp::WinvSq, bz);
    const VectorXd u = llt_h_.solve(r1);
    if (prog_.num_eq() > 0) {
      dy = llt_s_.solve(prog_.A_eq * u - by);
      dx = u - v_ * dy;
    } else {
      dy.resize(0);
      dx = u;
    }
    dz = apply_scaling(prog_.cones, *W_, ScaleOp::WinvSq, prog_.G * dx - bz);
  }

  const ConicProgram& prog_;
  double reg_;
  const NtScaling* W_ = nullptr;
  Eigen::LLT<MatrixXd> llt_h_;
  Eigen::LLT<MatrixXd> llt_s_;
  MatrixXd v_;
};

}  // namespace detail

// Primal-dual interior-point method on the homogeneous self-dual embedding.
// Detects optimality, primal infeasibility and unboundedness with
// certificate-based tests; deterministic for identical inputs and settings.
inline ConicSolution solve(const ConicProgram& prog,
                           const SolverSettings& settings = {}) {
  using namespace detail;
  const auto t0 = std::chrono::steady_clock::now();
  const int n = prog.num_vars();
  const int p = prog.num_eq();
  const int m = prog.num_cone_rows();
  if (m <= 0)
    throw Error(ErrorCode::NumericalFailure, "program has no cone rows");
  {
    int dim_sum = 0;
    for (const auto& blk : prog.cones) dim_sum += blk.dim;
    if (dim_sum != m)
      throw Error(ErrorCode::NumericalFailure, "cone dims do not match G");
  }

  const int nu = cone_degree(prog.cones);
  const VectorXd e = cone_identity(prog.cones, m);
  const double bnorm = p > 0 ? prog.b_eq.norm() : 0.0;
  const double hnorm = prog.h.norm();
  const double cnorm = prog.c.norm();

  NtScaling W;
  VectorXd lambda;
  // identity scaling for the initial point
  {
    VectorXd ones_s = e, ones_z = e;
    update_scaling(prog.cones, ones_s, ones_z, W, lambda);
  }
  KktSolver kkt(prog, settings.static_reg);
  kkt.factor(W);

  VectorXd x(n), y(p), z(m), s(m);
  {
    VectorXd dx, dy, dz;
    kkt.solve(VectorXd::Zero(n), p > 0 ? prog.b_eq : VectorXd(), prog.h, dx,
              dy, dz);
    x = dx;
    s = -dz;
    bring_to_cone(prog.cones, s);
    kkt.solve(-prog.c, VectorXd::Zero(p), VectorXd::Zero(m), dx, dy, dz);
    y = dy;
    z = dz;
    bring_to_cone(prog.cones, z);
  }
  double tau = 1.0, kappa = 1.0;

  ConicSolution out;
  double best_score = std::numeric_limits<double>::infinity();

  auto finish = [&](SolveStatus st, int iter) {
    out.status = st;
    out.iterations = iter;
    out.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
  };

  for (int iter = 0; iter <= settings.max_iter; ++iter) {
    // residuals of the embedding
    VectorXd E1 = prog.G.transpose() * z + prog.c * tau;
    if (p > 0) E1 += prog.A_eq.transpose() * y;
    VectorXd E2 = p > 0 ? VectorXd(prog.A_eq * x - prog.b_eq * tau) : VectorXd();
    VectorXd E3 = prog.G * x + s - prog.h * tau;
    const double cx = prog.c.dot(x);
    const double by = p > 0 ? prog.b_eq.dot(y) : 0.0;
    const double hz = prog.h.dot(z);
    const double E4 = cx + by + hz + kappa;
    const double gap = s.dot(z);
    const double mu = (gap + tau * kappa) / (nu + 1);

    // convergence on the de-homogenized candidate
    const double pres =
        std::max(p > 0 ? E2.norm() / (1.0 + bnorm) : 0.0,
                 E3.norm() / (1.0 + hnorm)) /
        tau;
    const double dres = E1.norm() / (1.0 + cnorm) / tau;
    const double pobj = cx / tau;
    const double dobj = -(by + hz) / tau;
    const double gapabs = gap / (tau * tau);
    const double relgap =
        std::abs(pobj - dobj) / std::max(1.0, std::min(std::abs(pobj), std::abs(dobj)));

    const double score = std::max(pres, dres) + std::min(gapabs, relgap);
    if (score < best_score) {
      best_score = score;
      out.x = x / tau;
      out.y = y / tau;
      out.z = z / tau;
      out.s = s / tau;
      out.primal_res = pres;
      out.dual_res = dres;
      out.gap = gapabs;
      out.objective = pobj;
    }

    if (pres <= settings.tol_feas && dres <= settings.tol_feas &&
        (gapabs <= settings.tol_gap || relgap <= settings.tol_gap)) {
      return finish(SolveStatus::Optimal, iter);
    }
    // primal infeasibility: A'y + G'z ~ 0, b'y + h'z < 0, z in K
    if (tau < kappa) {
      const double denom = -(by + hz);
      if (denom > settings.tol_feas) {
        VectorXd cert = prog.G.transpose() * (z / denom);
        if (p > 0) cert += prog.A_eq.transpose() * (y / denom);
        if (cert.norm() / (1.0 + cnorm) <= settings.tol_feas) {
          out.y = y / denom;
          out.z = z / denom;
          return finish(SolveStatus::Infeasible, iter);
        }
      }
      // dual infeasibility (primal unbounded): Ax ~ 0, Gx + s ~ 0, c'x < 0
      if (-cx > settings.tol_feas) {
        const double dn = -cx;
        const double r1 = p > 0 ? (prog.A_eq * x).norm() / dn : 0.0;
        const double r2 = (prog.G * x + s).norm() / dn;
        if (std::max(r1, r2) / (1.0 + hnorm + bnorm) <= settings.tol_feas) {
          out.x = x / dn;
          out.s = s / dn;
          return finish(SolveStatus::Unbounded, iter);
        }
      }
    }
    if (iter == settings.max_iter) break;
    if (!std::isfinite(mu) || mu <= 0.0)
      throw Error(ErrorCode::NumericalFailure, "interior-point mu collapsed");

    if (!update_scaling(prog.cones, s, z, W, lambda))
      throw Error(ErrorCode::NumericalFailure, "iterate left the cone");
    kkt.factor(W);

    VectorXd x1, y1, z1;
    kkt.solve(-prog.c, p > 0 ? prog.b_eq : VectorXd(), prog.h, x1, y1, z1);
    const double c_x1 = prog.c.dot(x1) + (p > 0 ? prog.b_eq.dot(y1) : 0.0) +
                        prog.h.dot(z1);

    const VectorXd lam_sq = jordan_prod(prog.cones, lambda, lambda);

    auto direction = [&](double sigma, const VectorXd& corr, double corr_tau,
                         VectorXd& dx, VectorXd& dy, VectorXd& dz,
                         VectorXd& ds, double& dtau, double& dkappa) {
      const double one_minus = 1.0 - sigma;
      VectorXd dsrhs = sigma * mu * e - lam_sq - corr;
      const VectorXd dbar = jordan_div(prog.cones, lambda, dsrhs);
      const VectorXd wdbar =
          apply_scaling(prog.cones, W, ScaleOp::W, dbar);
      VectorXd x2, y2, z2;
      kkt.solve(-one_minus * E1, p > 0 ? VectorXd(-one_minus * E2) : VectorXd(),
                -one_minus * E3 - wdbar, x2, y2, z2);
      const double rhs4 =
          -one_minus * E4 - (sigma * mu - tau * kappa - corr_tau) / tau;
      const double denom = c_x1 - kappa / tau;
      dtau = (rhs4 - prog.c.dot(x2) - (p > 0 ? prog.b_eq.dot(y2) : 0.0) -
              prog.h.dot(z2)) /
             denom;
      dx = x2 + dtau * x1;
      if (p > 0) dy = y2 + dtau * y1;
      dz = z2 + dtau * z1;
      ds = wdbar - apply_scaling(prog.cones, W, ScaleOp::Wsq, dz);
      dkappa = (sigma * mu - tau * kappa - corr_tau) / tau - (kappa / tau) * dtau;
    };

    auto step_limit = [&](const VectorXd& ds, const VectorXd& dz, double dtau,
                          double dkappa) {
      double a = std::min(max_step(prog.cones, s, ds),
                          max_step(prog.cones, z, dz));
      if (dtau < 0.0) a = std::min(a, -tau / dtau);
      if (dkappa < 0.0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    // predictor
    VectorXd dxa, dya, dza, dsa;
    double dtaua, dkappaa;
    direction(0.0, VectorXd::Zero(m), 0.0, dxa, dya, dza, dsa, dtaua, dkappaa);
    double alpha_aff = std::min(1.0, step_limit(dsa, dza, dtaua, dkappaa));
    const double mu_aff =
        ((s + alpha_aff * dsa).dot(z + alpha_aff * dza) +
         (tau + alpha_aff * dtaua) * (kappa + alpha_aff * dkappaa)) /
        (nu + 1);
    double sigma = std::pow(std::max(0.0, mu_aff / mu), 3);
    sigma = std::clamp(sigma, 1e-8, 1.0 - 1e-8);

    // corrector
    const VectorXd winv_dsa =
        apply_scaling(prog.cones, W, ScaleOp::Winv, dsa);
    const VectorXd w_dza = apply_scaling(prog.cones, W, ScaleOp::W, dza);
    const VectorXd corr = jordan_prod(prog.cones, winv_dsa, w_dza);

    VectorXd dx, dy, dz, ds;
    double dtau, dkappa;
    direction(sigma, corr, dtaua * dkappaa, dx, dy, dz, ds, dtau, dkappa);
    double alpha =
        std::min(1.0, settings.step_fraction * step_limit(ds, dz, dtau, dkappa));
    if (!std::isfinite(alpha) || alpha <= 1e-14)
      throw Error(ErrorCode::NumericalFailure, "line search stalled");

    x += alpha * dx;
    if (p > 0) y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
    if (tau <= 0.0 || kappa < 0.0 || !x.allFinite() || !z.allFinite())
      throw Error(ErrorCode::NumericalFailure, "iterate diverged");
  }
  return finish(SolveStatus::MaxIter, settings.max_iter);
}

// Plain-text sparse triplet dump for cross-checking against external solvers.
// Header lines give dims and the cone list; entries are COO (row col value).
inline std::string dump_program(const ConicProgram& prog) {
  std::string out;
  char buf[128];
  auto put = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof(buf), fmt, args...);
    out += buf;
  };
  out += "socp_triplets 1\n";
  put("dims n=%d p=%d m=%d\n", prog.num_vars(), prog.num_eq(),
      prog.num_cone_rows());
  out += "cones";
  for (const auto& blk : prog.cones)
    put(" %s:%d", blk.kind == ConeKind::Orthant ? "orthant" : "soc", blk.dim);
  out += "\n";
  auto dump_vec = [&](const char* name, const VectorXd& v) {
    out += name;
    out += "\n";
    for (int i = 0; i < v.size(); ++i)
      if (v(i) != 0.0) put("%d %.17g\n", i, v(i));
    out += "end\n";
  };
  auto dump_mat = [&](const char* name, const MatrixXd& mat) {
    out += name;
    out += "\n";
    for (int i = 0; i < mat.rows(); ++i)
      for (int j = 0; j < mat.cols(); ++j)
        if (mat(i, j) != 0.0) put("%d %d %.17g\n", i, j, mat(i, j));
    out += "end\n";
  };
  dump_vec("c", prog.c);
  dump_mat("A_eq", prog.A_eq);
  dump_vec("b_eq", prog.b_eq);
  dump_mat("G", prog.G);
  dump_vec("h", prog.h);
  return out;
}

}  // namespace synthctrl
