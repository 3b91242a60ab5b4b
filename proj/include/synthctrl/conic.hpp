#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "synthctrl/constraints.hpp"
#include "synthctrl/panel.hpp"
#include "synthctrl/socp.hpp"

namespace synthctrl {

// Symmetric PSD square root; eigenvalues below the clip are treated as zero.
inline MatrixXd psd_sqrt(const MatrixXd& m, double clip = 1e-12) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  VectorXd vals = eig.eigenvalues();
  for (int i = 0; i < vals.size(); ++i)
    vals(i) = vals(i) < clip ? 0.0 : std::sqrt(vals(i));
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

// Numeric form of the quadratic-epigraph cone rows: x'Px <= y becomes
// ||(1-y, 2 P^{1/2} x)|| <= 1+y. Returns (1+y, 1-y, 2 P^{1/2} x).
inline VectorXd norm_cone_rows(const MatrixXd& p_half, const VectorXd& x,
                               double y) {
  VectorXd rows(2 + p_half.rows());
  rows(0) = 1.0 + y;
  rows(1) = 1.0 - y;
  rows.tail(p_half.rows()) = 2.0 * (p_half * x);
  return rows;
}

inline bool in_soc(const VectorXd& rows, double tol = 0.0) {
  return rows(0) + tol >= rows.tail(rows.size() - 1).norm();
}

// Incremental dense program assembly. Row values are affine in the
// variables; a cone row with value expr means  h - Gx = expr in K.
class ProgramBuilder {
 public:
  explicit ProgramBuilder(int nvars)
      : n_(nvars), labels_(nvars) {}

  void label(int var, std::string name) { labels_[var] = std::move(name); }

  void add_eq(const VectorXd& coeffs, double rhs) {
    eq_rows_.push_back(coeffs);
    eq_rhs_.push_back(rhs);
  }

  // value = constant + coeffs'x must be >= 0
  void add_nonneg(const VectorXd& coeffs, double constant) {
    if (cones_.empty() || cones_.back().kind != ConeKind::Orthant ||
        !orthant_open_)
      begin_orthant();
    push_row(coeffs, constant);
    ++cones_.back().dim;
  }
  void begin_orthant() {
    cones_.push_back({ConeKind::Orthant, 0});
    orthant_open_ = true;
  }
  void close_orthant() { orthant_open_ = false; }

  void begin_soc() {
    cones_.push_back({ConeKind::Soc, 0});
    orthant_open_ = false;
  }
  void add_soc_row(const VectorXd& coeffs, double constant) {
    push_row(coeffs, constant);
    ++cones_.back().dim;
  }

  // x'Px <= y with x = x0 + Xc * vars and y = y0 + yc' vars; emits one
  // second-order-cone block of dimension 2 + rows(P^{1/2}).
  void add_quad_epigraph(const MatrixXd& p_half, const MatrixXd& xc,
                         const VectorXd& x0, const VectorXd& yc, double y0) {
    begin_soc();
    add_soc_row(yc, 1.0 + y0);
    add_soc_row(-yc, 1.0 - y0);
    const MatrixXd mc = 2.0 * (p_half * xc);
    const VectorXd m0 = 2.0 * (p_half * x0);
    for (int r = 0; r < mc.rows(); ++r) add_soc_row(mc.row(r), m0(r));
  }

  ConicProgram build(VectorXd c) const {
    ConicProgram prog;
    prog.c = std::move(c);
    prog.labels = labels_;
    const int p = static_cast<int>(eq_rows_.size());
    prog.A_eq.resize(p, n_);
    prog.b_eq.resize(p);
    for (int i = 0; i < p; ++i) {
      prog.A_eq.row(i) = eq_rows_[i];
      prog.b_eq(i) = eq_rhs_[i];
    }
    const int m = static_cast<int>(rows_.size());
    prog.G.resize(m, n_);
    prog.h.resize(m);
    for (int i = 0; i < m; ++i) {
      prog.G.row(i) = -rows_[i];
      prog.h(i) = consts_[i];
    }
    for (const auto& blk : cones_)
      if (blk.dim > 0) prog.cones.push_back(blk);
    return prog;
  }

  int num_vars() const { return n_; }

 private:
  void push_row(const VectorXd& coeffs, double constant) {
    rows_.push_back(coeffs);
    consts_.push_back(constant);
  }

  int n_;
  std::vector<std::string> labels_;
  std::vector<VectorXd> eq_rows_;
  std::vector<double> eq_rhs_;
  std::vector<VectorXd> rows_;
  std::vector<double> consts_;
  std::vector<ConeBlock> cones_;
  bool orthant_open_ = false;
};

// ---------------------------------------------------------------------------
// Weight-fitting program

struct FitProgram {
  ConicProgram program;
  int w_begin = 0, w_count = 0;
  int r_begin = 0, r_count = 0;
  int v_index = 0;
  int z_begin = -1;  // lasso slack split
};

// Cast the constrained weighted least-squares fit as a SOCP: epigraph
// variable v bounds the weighted residual norm, the family constraints map
// to orthant rows, an L1 split, or per-unit norm cones.
inline FitProgram canonicalize_fit(const DesignMatrices& design,
                                   const ConstraintSpec& cspec) {
  const int jtot = design.layout.j_total;
  const int rtot = design.d() - jtot;
  const int n1 = design.n_treated();
  const bool lasso = cspec.family == ConstraintFamily::Lasso;
  const int nvars = design.d() + 1 + (lasso ? jtot : 0);

  FitProgram out;
  out.w_begin = 0;
  out.w_count = jtot;
  out.r_begin = jtot;
  out.r_count = rtot;
  out.v_index = design.d();
  out.z_begin = lasso ? design.d() + 1 : -1;

  ProgramBuilder builder(nvars);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < design.layout.w_len[i]; ++j)
      builder.label(design.layout.w_offset[i] + j,
                    "w[" + design.treated[i] + "," + design.donor_pools[i][j] + "]");
    for (int k = 0; k < design.layout.r_len[i]; ++k)
      builder.label(design.layout.r_offset[i] + k,
                    "r[" + design.treated[i] + "," + std::to_string(k) + "]");
  }
  builder.label(out.v_index, "v");

  auto unit_vec = [&](int idx) {
    VectorXd v = VectorXd::Zero(nvars);
    v(idx) = 1.0;
    return v;
  };
  for (int i = 0; i < n1; ++i) {
    cspec.validate(design.layout.w_len[i]);
  }

  // equality + orthant rows of the family
  if (cspec.family == ConstraintFamily::Simplex ||
      cspec.family == ConstraintFamily::L1L2) {
    const double q1 = cspec.family == ConstraintFamily::Simplex ? 1.0 : cspec.q1;
    for (int i = 0; i < n1; ++i) {
      VectorXd row = VectorXd::Zero(nvars);
      row.segment(design.layout.w_offset[i], design.layout.w_len[i]).setOnes();
      builder.add_eq(row, q1);
    }
    builder.begin_orthant();
    for (int j = 0; j < jtot; ++j) builder.add_nonneg(unit_vec(j), 0.0);
    builder.close_orthant();
  }

  // objective epigraph ||V^{1/2}(A - Bw - Cr)||^2 <= v
  const MatrixXd v_half = psd_sqrt(design.V);
  MatrixXd xc = MatrixXd::Zero(design.n_rows(), nvars);
  xc.block(0, 0, design.n_rows(), design.d()) = -design.Z;
  builder.add_quad_epigraph(v_half, xc, design.A, unit_vec(out.v_index), 0.0);

  if (cspec.family == ConstraintFamily::L1L2 ||
      cspec.family == ConstraintFamily::Ridge) {
    // ||w^{[i]}||^2 <= q2^2 per unit via the same norm-cone form
    for (int i = 0; i < n1; ++i) {
      const int wl = design.layout.w_len[i];
      MatrixXd wc = MatrixXd::Zero(wl, nvars);
      wc.block(0, design.layout.w_offset[i], wl, wl).setIdentity();
      builder.add_quad_epigraph(MatrixXd::Identity(wl, wl), wc,
                                VectorXd::Zero(wl), VectorXd::Zero(nvars),
                                cspec.q2_for(i) * cspec.q2_for(i));
    }
  }
  if (lasso) {
    for (int i = 0; i < n1; ++i) {
      builder.begin_orthant();
      VectorXd row = VectorXd::Zero(nvars);
      row.segment(out.z_begin + design.layout.w_offset[i],
                  design.layout.w_len[i]) = -VectorXd::Ones(design.layout.w_len[i]);
      builder.add_nonneg(row, cspec.q1);
      builder.close_orthant();
    }
    builder.begin_orthant();
    for (int j = 0; j < jtot; ++j) {  // z + w >= 0
      VectorXd row = VectorXd::Zero(nvars);
      row(out.z_begin + j) = 1.0;
      row(j) = 1.0;
      builder.add_nonneg(row, 0.0);
    }
    builder.close_orthant();
    builder.begin_orthant();
    for (int j = 0; j < jtot; ++j) {  // z - w >= 0
      VectorXd row = VectorXd::Zero(nvars);
      row(out.z_begin + j) = 1.0;
      row(j) = -1.0;
      builder.add_nonneg(row, 0.0);
    }
    builder.close_orthant();
    for (int j = 0; j < jtot; ++j)
      builder.label(out.z_begin + j, "z[" + std::to_string(j) + "]");
  }

  VectorXd c = VectorXd::Zero(nvars);
  c(out.v_index) = 1.0;
  out.program = builder.build(std::move(c));
  return out;
}

// ---------------------------------------------------------------------------
// In-sample bound programs

enum class BoundDirection { Inf, Sup };

struct BoundOptions {
  std::optional<double> delta_cap;
  SolverSettings solver;
};

struct BoundProgram {
  ConicProgram program;
  int d = 0;
  BoundDirection direction = BoundDirection::Sup;
};

// Optimize p_tau' delta over Delta* intersected with the basic-inequality
// region { delta' Qhat delta - 2 G*' delta <= 0 }, written with an epigraph
// variable t: delta'Qhat delta <= t and t - 2 G*' delta <= 0.
inline BoundProgram canonicalize_bound(BoundDirection dir, const VectorXd& p_tau,
                                       const MatrixXd& qhat_half,
                                       const VectorXd& g_star,
                                       const RelaxedSet& relaxed,
                                       const BoundOptions& opts = {}) {
  const int d = static_cast<int>(p_tau.size());
  int jtot = 0;
  bool lasso = false;
  for (const auto& con : relaxed.constraints.ineq)
    if (con.kind == SmoothConstraint::Kind::L1Budget) {
      lasso = true;
      jtot = std::max(jtot, con.w_begin + con.w_len);
    }
  const int t_index = d;
  const int z_begin = d + 1;
  const int nvars = d + 1 + (lasso ? jtot : 0);

  ProgramBuilder builder(nvars);
  for (int i = 0; i < d; ++i) builder.label(i, "delta[" + std::to_string(i) + "]");
  builder.label(t_index, "t");

  const VectorXd& bh = relaxed.beta_hat;

  for (const auto& con : relaxed.constraints.eq) {
    VectorXd row = VectorXd::Zero(nvars);
    row.segment(con.w_begin, con.w_len).setOnes();
    builder.add_eq(row, con.level - bh.segment(con.w_begin, con.w_len).sum());
  }

  builder.begin_orthant();
  {
    // 2 G*' delta - t >= 0
    VectorXd row = VectorXd::Zero(nvars);
    row.head(d) = 2.0 * g_star;
    row(t_index) = -1.0;
    builder.add_nonneg(row, 0.0);
  }
  for (size_t j = 0; j < relaxed.constraints.ineq.size(); ++j) {
    const auto& con = relaxed.constraints.ineq[j];
    if (con.kind == SmoothConstraint::Kind::NonNeg) {
      VectorXd row = VectorXd::Zero(nvars);
      row(con.coord) = 1.0;
      builder.add_nonneg(row, bh(con.coord) + relaxed.rhs[j]);
    } else if (con.kind == SmoothConstraint::Kind::L1Budget) {
      VectorXd row = VectorXd::Zero(nvars);
      row.segment(z_begin + con.w_begin, con.w_len) =
          -VectorXd::Ones(con.w_len);
      builder.add_nonneg(row, con.level + relaxed.rhs[j]);
    }
  }
  if (lasso) {
    for (int c = 0; c < jtot; ++c) {  // z >= |beta_hat + delta| split
      VectorXd row = VectorXd::Zero(nvars);
      row(z_begin + c) = 1.0;
      row(c) = 1.0;
      builder.add_nonneg(row, bh(c));
      row(c) = -1.0;
      builder.add_nonneg(row, -bh(c));
      builder.label(z_begin + c, "z[" + std::to_string(c) + "]");
    }
  }
  if (opts.delta_cap) {
    const double cap = *opts.delta_cap;
    for (int c = 0; c < d; ++c) {
      VectorXd row = VectorXd::Zero(nvars);
      row(c) = 1.0;
      builder.add_nonneg(row, cap);
      row(c) = -1.0;
      builder.add_nonneg(row, cap);
    }
  }
  builder.close_orthant();

  for (size_t j = 0; j < relaxed.constraints.ineq.size(); ++j) {
    const auto& con = relaxed.constraints.ineq[j];
    if (con.kind != SmoothConstraint::Kind::L2Ball) continue;
    // ||beta_hat + delta||^2 <= level + rhs on the unit's weight block
    const double lvl = con.level + relaxed.rhs[j];
    MatrixXd wc = MatrixXd::Zero(con.w_len, nvars);
    wc.block(0, con.w_begin, con.w_len, con.w_len).setIdentity();
    builder.add_quad_epigraph(MatrixXd::Identity(con.w_len, con.w_len), wc,
                              bh.segment(con.w_begin, con.w_len),
                              VectorXd::Zero(nvars), lvl);
  }

  // delta' Qhat delta <= t
  {
    MatrixXd xc = MatrixXd::Zero(d, nvars);
    xc.leftCols(d).setIdentity();
    VectorXd yc = VectorXd::Zero(nvars);
    yc(t_index) = 1.0;
    builder.add_quad_epigraph(qhat_half, xc, VectorXd::Zero(d), yc, 0.0);
  }

  VectorXd c = VectorXd::Zero(nvars);
  c.head(d) = dir == BoundDirection::Sup ? VectorXd(-p_tau) : p_tau;
  BoundProgram out;
  out.program = builder.build(std::move(c));
  out.d = d;
  out.direction = dir;
  return out;
}

struct BoundValue {
  double value = 0.0;
  SolveStatus status = SolveStatus::MaxIter;
  bool ok() const {
    return status == SolveStatus::Optimal || status == SolveStatus::Unbounded;
  }
};

inline BoundValue solve_bound(const BoundProgram& bp, const VectorXd& p_tau,
                              const SolverSettings& settings) {
  BoundValue out;
  ConicSolution sol;
  try {
    sol = solve(bp.program, settings);
  } catch (const Error&) {
    out.status = SolveStatus::MaxIter;
    return out;
  }
  out.status = sol.status;
  if (sol.status == SolveStatus::Optimal) {
    out.value = p_tau.dot(sol.x.head(bp.d));
  } else if (sol.status == SolveStatus::Unbounded) {
    out.value = bp.direction == BoundDirection::Sup
                    ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace synthctrl
