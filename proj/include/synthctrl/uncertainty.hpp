#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "synthctrl/conic.hpp"
#include "synthctrl/predictands.hpp"
#include "synthctrl/rng.hpp"

namespace synthctrl {

enum class SigmaMethod { HC0, HC1, HC2, HC3 };
enum class OosMethod { Subgaussian, LocationScale, QuantileReg };
enum class SigmaCombine { DependenceAgnostic, Independence };
enum class SimultaneousMethod { MaxIneq, Bonferroni, Scheffe };

// Empirical quantile by the lower order statistic at index ceil(q*n),
// clamped to [1, n].
inline double order_stat_quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error(ErrorCode::TooFewResiduals, "no values for quantile");
  std::sort(v.begin(), v.end());
  const int n = static_cast<int>(v.size());
  int k = static_cast<int>(std::ceil(q * n));
  k = std::clamp(k, 1, n);
  return v[k - 1];
}

// ---------------------------------------------------------------------------
// Conditional moments of the pseudo-true residuals

struct MomentModel {
  VectorXd mu_hat;       // fitted conditional mean per design row
  MatrixXd sigma_hat;    // d x d
  VectorXd omega_sq;     // per-row scaled squared centered residual
  SigmaMethod method = SigmaMethod::HC1;
  std::vector<std::string> notes;
};

namespace detail {

// Least squares with a rank-deficiency fallback to a tiny ridge penalty.
inline VectorXd ls_fit(const MatrixXd& x, const VectorXd& y,
                       std::vector<std::string>* notes, const std::string& what) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    if (notes)
      notes->push_back("rank-deficient regressors in " + what +
                       "; ridge fallback (1e-8)");
    MatrixXd xtx = x.transpose() * x;
    xtx.diagonal().array() += 1e-8;
    return xtx.ldlt().solve(x.transpose() * y);
  }
  return qr.solve(y);
}

}  // namespace detail

// Fitted conditional mean of the residuals: per treated unit and feature,
// regress u on the unit's donor columns and their first lag (lag entries of
// the first kept row are zero, so that row's fit drops the lag terms).
inline VectorXd estimate_conditional_mean(const DesignMatrices& design,
                                          const VectorXd& u_hat,
                                          std::vector<std::string>* notes = nullptr,
                                          int lag_order = 1) {
  VectorXd mu = VectorXd::Zero(design.n_rows());
  for (int i = 0; i < design.n_treated(); ++i) {
    const int wb = design.layout.w_offset[i];
    const int wl = design.layout.w_len[i];
    for (size_t f = 0; f < design.features.size(); ++f) {
      std::vector<int> rows;
      for (int r = 0; r < design.n_rows(); ++r)
        if (design.rows[r].unit == i &&
            design.rows[r].feature == static_cast<int>(f))
          rows.push_back(r);
      if (rows.empty()) continue;
      const int n = static_cast<int>(rows.size());
      const int p = 1 + wl * (1 + std::max(0, lag_order));
      MatrixXd x = MatrixXd::Zero(n, p);
      VectorXd y(n);
      for (int r = 0; r < n; ++r) {
        x(r, 0) = 1.0;
        x.block(r, 1, 1, wl) = design.B.block(rows[r], wb, 1, wl);
        if (lag_order >= 1 && r >= 1)
          x.block(r, 1 + wl, 1, wl) = design.B.block(rows[r - 1], wb, 1, wl);
        y(r) = u_hat(rows[r]);
      }
      const VectorXd coef = detail::ls_fit(
          x, y, notes,
          "residual mean model (unit " + design.treated[i] + ")");
      const VectorXd fit = x * coef;
      for (int r = 0; r < n; ++r) mu(rows[r]) = fit(r);
    }
  }
  return mu;
}

// Heteroskedasticity-robust covariance of gamma_hat = Z'V u conditional on
// the design: Sigma_hat = sum_r omega_r^2 z_r z_r' with z_r the r-th row of
// V Z. HC1 rescales by n/(n-d); HC2/HC3 use leverages from the projection
// onto Z.
inline MatrixXd estimate_sigma(const DesignMatrices& design, const VectorXd& u_hat,
                               const VectorXd& mu_hat,
                               SigmaMethod method = SigmaMethod::HC1,
                               MomentModel* details = nullptr) {
  const int n = design.n_rows();
  const int d = design.d();
  const MatrixXd vz = design.V * design.Z;
  const VectorXd e = u_hat - mu_hat;
  VectorXd scale = VectorXd::Ones(n);
  if (method == SigmaMethod::HC1) {
    if (n > d) {
      scale.setConstant(static_cast<double>(n) / (n - d));
    } else if (details) {
      details->notes.push_back("HC1 needs n > d; using HC0 scale");
    }
  } else if (method == SigmaMethod::HC2 || method == SigmaMethod::HC3) {
    MatrixXd ztz = design.Z.transpose() * design.Z;
    ztz.diagonal().array() += 1e-12 * (1.0 + ztz.diagonal().maxCoeff());
    const Eigen::LDLT<MatrixXd> ldlt(ztz);
    for (int r = 0; r < n; ++r) {
      const VectorXd zr = design.Z.row(r).transpose();
      double h = zr.dot(ldlt.solve(zr));
      h = std::min(h, 1.0 - 1e-8);
      scale(r) = method == SigmaMethod::HC2 ? 1.0 / (1.0 - h)
                                            : 1.0 / ((1.0 - h) * (1.0 - h));
    }
  }
  MatrixXd sigma = MatrixXd::Zero(d, d);
  VectorXd omega_sq(n);
  for (int r = 0; r < n; ++r) {
    omega_sq(r) = scale(r) * e(r) * e(r);
    sigma.noalias() += omega_sq(r) * vz.row(r).transpose() * vz.row(r);
  }
  if (details) {
    details->omega_sq = omega_sq;
    details->method = method;
  }
  return sigma;
}

// Newey-West style lag-window variant with Bartlett weights over each
// (unit, feature) time block; lag = floor(T0^{1/3}). Off the default path.
inline MatrixXd estimate_sigma_newey_west(const DesignMatrices& design,
                                          const VectorXd& u_hat,
                                          const VectorXd& mu_hat) {
  const int d = design.d();
  const MatrixXd vz = design.V * design.Z;
  const VectorXd e = u_hat - mu_hat;
  MatrixXd sigma = MatrixXd::Zero(d, d);
  for (int i = 0; i < design.n_treated(); ++i) {
    const int lag = static_cast<int>(
        std::floor(std::pow(static_cast<double>(design.t0[i]), 1.0 / 3.0)));
    for (size_t f = 0; f < design.features.size(); ++f) {
      std::vector<int> rows;
      for (int r = 0; r < design.n_rows(); ++r)
        if (design.rows[r].unit == i &&
            design.rows[r].feature == static_cast<int>(f))
          rows.push_back(r);
      const int n = static_cast<int>(rows.size());
      for (int a = 0; a < n; ++a) {
        const VectorXd za = vz.row(rows[a]).transpose();
        sigma.noalias() += e(rows[a]) * e(rows[a]) * za * za.transpose();
        for (int l = 1; l <= lag && a - l >= 0; ++l) {
          const double w = 1.0 - static_cast<double>(l) / (lag + 1);
          const VectorXd zb = vz.row(rows[a - l]).transpose();
          const MatrixXd cross =
              w * e(rows[a]) * e(rows[a - l]) * za * zb.transpose();
          sigma.noalias() += cross + cross.transpose();
        }
      }
    }
  }
  return sigma;
}

// Cholesky-type square root after the trace jitter; falls back to the
// eigenvalue square root for rank-deficient matrices.
inline MatrixXd sigma_sqrt(const MatrixXd& sigma) {
  const int d = static_cast<int>(sigma.rows());
  const double tr = sigma.trace();
  if (!(tr > 0.0)) return MatrixXd::Zero(d, d);
  MatrixXd jittered = sigma;
  jittered.diagonal().array() += 1e-12 * tr / d;
  Eigen::LLT<MatrixXd> llt(jittered);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  return psd_sqrt(jittered);
}

// ---------------------------------------------------------------------------
// In-sample simulation

struct InsampleOptions {
  std::optional<double> delta_cap;
  SolverSettings solver;
  int threads = 0;  // 0 = hardware concurrency
  double max_failure_share = 0.10;
};

// Bound-program values for S Gaussian draws, shared across the objectives in
// p_taus (one pair of programs per draw and objective). A draw where any
// solve fails is dropped whole and counted.
struct InsampleDraws {
  std::vector<std::vector<double>> lo, hi;  // [objective][draw]
  std::vector<char> failed;                 // per draw
  int draws = 0;
  int failures = 0;
};

namespace detail {

template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
  }
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

inline InsampleDraws run_insample_draws(int s_draws, std::uint64_t seed,
                                        const std::vector<VectorXd>& p_taus,
                                        const MatrixXd& qhat_half,
                                        const MatrixXd& sigma_hat,
                                        const RelaxedSet& relaxed,
                                        const InsampleOptions& opts = {}) {
  if (s_draws < 1)
    throw Error(ErrorCode::ConfigError, "need at least one draw");
  const int d = static_cast<int>(relaxed.beta_hat.size());
  const MatrixXd root = sigma_sqrt(sigma_hat);
  const int nk = static_cast<int>(p_taus.size());

  InsampleDraws out;
  out.draws = s_draws;
  out.lo.assign(nk, std::vector<double>(s_draws, 0.0));
  out.hi.assign(nk, std::vector<double>(s_draws, 0.0));
  out.failed.assign(s_draws, 0);

  BoundOptions bopts;
  bopts.delta_cap = opts.delta_cap;
  bopts.solver = opts.solver;

  detail::parallel_for(s_draws, opts.threads, [&](int s) {
    Philox rng(seed, rng_domain::kInsampleDraw, static_cast<std::uint64_t>(s) + 1);
    VectorXd g(d);
    for (int i = 0; i < d; ++i) g(i) = rng.next_normal();
    const VectorXd g_star = root * g;
    for (int k = 0; k < nk; ++k) {
      const auto sup = solve_bound(
          canonicalize_bound(BoundDirection::Sup, p_taus[k], qhat_half, g_star,
                             relaxed, bopts),
          p_taus[k], opts.solver);
      const auto inf = solve_bound(
          canonicalize_bound(BoundDirection::Inf, p_taus[k], qhat_half, g_star,
                             relaxed, bopts),
          p_taus[k], opts.solver);
      if (!sup.ok() || !inf.ok()) {
        out.failed[s] = 1;
        return;
      }
      out.hi[k][s] = sup.value;
      out.lo[k][s] = inf.value;
    }
  });
  for (char f : out.failed) out.failures += f ? 1 : 0;
  if (out.failures > opts.max_failure_share * s_draws)
    throw Error(ErrorCode::TooManyFailures,
                std::to_string(out.failures) + " of " +
                    std::to_string(s_draws) + " draws failed");
  return out;
}

struct M1Bounds {
  double m1l = 0.0, m1u = 0.0;
  int used = 0, failures = 0;
};

inline M1Bounds pointwise_m1(const InsampleDraws& draws, int objective,
                             double alpha1) {
  std::vector<double> lo, hi;
  for (int s = 0; s < draws.draws; ++s)
    if (!draws.failed[s]) {
      lo.push_back(draws.lo[objective][s]);
      hi.push_back(draws.hi[objective][s]);
    }
  M1Bounds out;
  out.used = static_cast<int>(lo.size());
  out.failures = draws.failures;
  out.m1l = order_stat_quantile(lo, alpha1 / 2.0);
  out.m1u = order_stat_quantile(hi, 1.0 - alpha1 / 2.0);
  return out;
}

// Joint over (a subset of) the objectives: per draw take the envelope,
// then the quantiles.
inline M1Bounds joint_m1(const InsampleDraws& draws, double alpha1,
                         const std::vector<int>& objectives = {}) {
  std::vector<int> which = objectives;
  if (which.empty())
    for (int k = 0; k < static_cast<int>(draws.lo.size()); ++k)
      which.push_back(k);
  std::vector<double> lo, hi;
  for (int s = 0; s < draws.draws; ++s) {
    if (draws.failed[s]) continue;
    double l = std::numeric_limits<double>::infinity();
    double u = -std::numeric_limits<double>::infinity();
    for (int k : which) {
      l = std::min(l, draws.lo[k][s]);
      u = std::max(u, draws.hi[k][s]);
    }
    lo.push_back(l);
    hi.push_back(u);
  }
  M1Bounds out;
  out.used = static_cast<int>(lo.size());
  out.failures = draws.failures;
  out.m1l = order_stat_quantile(lo, alpha1 / 2.0);
  out.m1u = order_stat_quantile(hi, 1.0 - alpha1 / 2.0);
  return out;
}

// Convenience wrapper for a single predictand.
inline M1Bounds simulate_insample(int s_draws, std::uint64_t seed,
                                  const VectorXd& p_tau, const MatrixXd& qhat_half,
                                  const MatrixXd& sigma_hat,
                                  const RelaxedSet& relaxed, double alpha1,
                                  const InsampleOptions& opts = {},
                                  InsampleDraws* raw = nullptr) {
  auto draws = run_insample_draws(s_draws, seed, {p_tau}, qhat_half, sigma_hat,
                                  relaxed, opts);
  auto out = pointwise_m1(draws, 0, alpha1);
  if (raw) *raw = std::move(draws);
  return out;
}

// ---------------------------------------------------------------------------
// Out-of-sample bounds

inline double subgaussian_half_width(double sigma, double alpha2) {
  return std::sqrt(2.0 * sigma * sigma * std::log(2.0 / alpha2));
}

// Simultaneous max-inequality width over L+1 periods.
inline double subgaussian_joint_half_width(double sigma, int num_periods,
                                           double alpha2) {
  return std::sqrt(2.0 * sigma * sigma *
                   std::log(2.0 * num_periods / alpha2));
}

struct M2Bounds {
  double m2l = 0.0, m2u = 0.0;
};

// Sub-Gaussian bounds for a predictand whose error averages the per-target
// errors: the dependence-agnostic combination uses the mean of the scales,
// the independence variant (1/n) sqrt(sum sigma^2).
inline M2Bounds outsample_subgaussian(const std::vector<double>& e_means,
                                      const std::vector<double>& sigmas,
                                      double alpha2,
                                      SigmaCombine combine =
                                          SigmaCombine::DependenceAgnostic) {
  if (e_means.empty() || e_means.size() != sigmas.size())
    throw Error(ErrorCode::ConfigError, "mismatched out-of-sample inputs");
  const double n = static_cast<double>(e_means.size());
  double mean = 0.0;
  for (double v : e_means) mean += v;
  mean /= n;
  double sigma;
  if (e_means.size() == 1) {
    sigma = sigmas[0];
  } else if (combine == SigmaCombine::Independence) {
    double s2 = 0.0;
    for (double s : sigmas) s2 += s * s;
    sigma = std::sqrt(s2) / n;
  } else {
    sigma = 0.0;
    for (double s : sigmas) sigma += s;
    sigma /= n;
  }
  const double half = subgaussian_half_width(sigma, alpha2);
  return {mean - half, mean + half};
}

// Per-unit regression pieces behind the out-of-sample models: pre-treatment
// outcome residuals regressed on the contemporaneous donor outcomes.
struct UnitOosFit {
  VectorXd mean_coef;
  VectorXd var_coef;
  double uncond_var = 0.0;
  std::vector<double> resid;
  std::vector<double> std_resid;
  MatrixXd pre_x;  // rows x (1 + J)
  std::vector<std::string> notes;

  double mean_at(const VectorXd& x) const { return mean_coef.dot(x); }
  double sigma_at(const VectorXd& x) const {
    double v = var_coef.dot(x);
    if (!(v > 0.0)) v = uncond_var;
    return std::sqrt(std::max(v, 0.0));
  }
};

inline UnitOosFit fit_unit_oos(const PanelDataset& data,
                               const DesignMatrices& design,
                               const VectorXd& beta_hat, int unit) {
  UnitOosFit out;
  const int wl = design.layout.w_len[unit];
  std::vector<int> rows;
  for (int r = 0; r < design.n_rows(); ++r)
    if (design.rows[r].unit == unit && design.rows[r].feature == 0)
      rows.push_back(r);
  const int n = static_cast<int>(rows.size());
  if (n == 0)
    throw Error(ErrorCode::AllRowsDropped, "no pre-treatment outcome rows");
  MatrixXd x(n, 1 + wl);
  VectorXd e(n);
  const VectorXd fitted = design.Z * beta_hat;
  for (int r = 0; r < n; ++r) {
    x(r, 0) = 1.0;
    x.block(r, 1, 1, wl) =
        design.B.block(rows[r], design.layout.w_offset[unit], 1, wl);
    e(r) = design.A(rows[r]) - fitted(rows[r]);
  }
  out.pre_x = x;
  out.mean_coef = detail::ls_fit(x, e, &out.notes, "out-of-sample mean model");
  const VectorXd centered = e - x * out.mean_coef;
  out.var_coef = detail::ls_fit(x, centered.cwiseProduct(centered), &out.notes,
                                "out-of-sample variance model");
  out.uncond_var = centered.squaredNorm() / n;
  for (int r = 0; r < n; ++r) {
    out.resid.push_back(e(r));
    double s = out.sigma_at(x.row(r).transpose());
    if (!(s > 0.0)) s = 1.0;
    out.std_resid.push_back(centered(r) / s);
  }
  (void)data;
  return out;
}

// Post-period regressor row matching UnitOosFit: (1, donor outcomes at t).
inline VectorXd oos_regressor(const PanelDataset& data,
                              const DesignMatrices& design, int unit, int t) {
  const int wl = design.layout.w_len[unit];
  VectorXd x(1 + wl);
  x(0) = 1.0;
  for (int j = 0; j < wl; ++j) {
    const double v = data.value(data.unit_index(design.donor_pools[unit][j]), 0, t);
    if (is_missing(v))
      throw Error(ErrorCode::MissingDonorOutcome,
                  "donor outcome missing at " + std::to_string(t));
    x(1 + j) = v;
  }
  return x;
}

// Location-scale bounds: empirical quantiles of the standardized
// pre-treatment residuals scaled back at the target.
inline M2Bounds outsample_location_scale(const UnitOosFit& fit,
                                         const VectorXd& target_x,
                                         double alpha2) {
  if (fit.std_resid.size() < 10)
    throw Error(ErrorCode::TooFewResiduals,
                "location-scale method needs at least 10 residuals");
  const double qlo = order_stat_quantile(fit.std_resid, alpha2 / 2.0);
  const double qhi = order_stat_quantile(fit.std_resid, 1.0 - alpha2 / 2.0);
  const double mean = fit.mean_at(target_x);
  const double sigma = fit.sigma_at(target_x);
  return {mean + sigma * qlo, mean + sigma * qhi};
}

// Linear quantile regression via the pinball-loss LP, solved with the same
// conic solver.
inline double quantile_regression_at(const MatrixXd& x, const VectorXd& y,
                                     double level, const VectorXd& target_x,
                                     const SolverSettings& settings = {}) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  // vars: b (p, free), u+ (n), u- (n)
  const int nvars = p + 2 * n;
  ProgramBuilder builder(nvars);
  for (int r = 0; r < n; ++r) {
    VectorXd row = VectorXd::Zero(nvars);
    row.head(p) = x.row(r);
    row(p + r) = 1.0;
    row(p + n + r) = -1.0;
    builder.add_eq(row, y(r));
  }
  builder.begin_orthant();
  for (int r = 0; r < 2 * n; ++r) {
    VectorXd row = VectorXd::Zero(nvars);
    row(p + r) = 1.0;
    builder.add_nonneg(row, 0.0);
  }
  builder.close_orthant();
  VectorXd c = VectorXd::Zero(nvars);
  c.segment(p, n).setConstant(level);
  c.segment(p + n, n).setConstant(1.0 - level);
  const ConicProgram prog = builder.build(std::move(c));
  ConicSolution sol;
  try {
    sol = solve(prog, settings);
  } catch (const Error& e) {
    throw Error(ErrorCode::SolverFailure,
                std::string("quantile regression failed: ") + e.what());
  }
  if (sol.status != SolveStatus::Optimal)
    throw Error(ErrorCode::SolverFailure, "quantile regression did not converge");
  return target_x.dot(sol.x.head(p));
}

inline M2Bounds outsample_quantile(const UnitOosFit& fit, const VectorXd& target_x,
                                   double alpha2,
                                   const SolverSettings& settings = {}) {
  VectorXd y(static_cast<int>(fit.resid.size()));
  for (size_t i = 0; i < fit.resid.size(); ++i)
    y(static_cast<int>(i)) = fit.resid[i];
  double lo = quantile_regression_at(fit.pre_x, y, alpha2 / 2.0, target_x, settings);
  double hi =
      quantile_regression_at(fit.pre_x, y, 1.0 - alpha2 / 2.0, target_x, settings);
  if (lo > hi) std::swap(lo, hi);  // crossed fits are re-sorted
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Chi-square quantile (for Scheffe bands) via the regularized incomplete
// gamma function and bisection.

namespace detail {

inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw Error(ErrorCode::ConfigError, "gamma_p domain");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) {  // series expansion
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  // continued fraction (modified Lentz)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, dd = 1.0 / b, h = dd;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    dd = an * dd + b;
    if (std::abs(dd) < tiny) dd = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    dd = 1.0 / dd;
    const double del = dd * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

inline double chi_squared_quantile(int df, double p) {
  if (df < 1 || p <= 0.0 || p >= 1.0)
    throw Error(ErrorCode::ConfigError, "chi-square quantile domain");
  const double a = df / 2.0;
  double lo = 0.0, hi = std::max(1.0, 2.0 * df + 10.0);
  while (detail::gamma_p(a, hi / 2.0) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (detail::gamma_p(a, mid / 2.0) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Joint covariance of consecutive error blocks of length L+1, estimated
// from overlapping pre-treatment windows. Experimental.
inline MatrixXd joint_error_covariance(const std::vector<double>& resid, int num_periods) {
  const int n = static_cast<int>(resid.size());
  const int windows = n - num_periods + 1;
  if (windows < 2)
    throw Error(ErrorCode::MissingJointCovariance,
                "too few pre-treatment windows for the joint covariance");
  MatrixXd blocks(windows, num_periods);
  for (int w = 0; w < windows; ++w)
    for (int k = 0; k < num_periods; ++k) blocks(w, k) = resid[w + k];
  const Eigen::RowVectorXd mean = blocks.colwise().mean();
  const MatrixXd centered = blocks.rowwise() - mean;
  return centered.transpose() * centered / (windows - 1);
}

// Simultaneous out-of-sample bands over periods k = 0..L.
inline std::vector<M2Bounds> joint_outsample(
    SimultaneousMethod method, const std::vector<double>& e_means,
    const std::vector<double>& sigmas, double alpha2,
    const MatrixXd* sigma_joint = nullptr) {
  const int num = static_cast<int>(e_means.size());
  std::vector<M2Bounds> out(num);
  switch (method) {
    case SimultaneousMethod::MaxIneq: {
      double sigma_max = 0.0;
      for (double s : sigmas) sigma_max = std::max(sigma_max, s);
      const double eps = subgaussian_joint_half_width(sigma_max, num, alpha2);
      for (int k = 0; k < num; ++k) out[k] = {e_means[k] - eps, e_means[k] + eps};
      break;
    }
    case SimultaneousMethod::Bonferroni: {
      const double level = alpha2 / num;
      for (int k = 0; k < num; ++k) {
        const double half = subgaussian_half_width(sigmas[k], level);
        out[k] = {e_means[k] - half, e_means[k] + half};
      }
      break;
    }
    case SimultaneousMethod::Scheffe: {
      if (!sigma_joint)
        throw Error(ErrorCode::MissingJointCovariance,
                    "Scheffe bands need a joint covariance estimate");
      const double root = std::sqrt(chi_squared_quantile(num, 1.0 - alpha2));
      for (int k = 0; k < num; ++k) {
        const double s = std::sqrt(std::max((*sigma_joint)(k, k), 0.0));
        out[k] = {e_means[k] - s * root, e_means[k] + s * root};
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interval assembly

struct PredictionInterval {
  std::string label;
  int period = 0;  // k
  double tau_hat = 0.0;
  double m1l = 0.0, m1u = 0.0;
  double m2l = 0.0, m2u = 0.0;
  double eps_delta = 0.0;
  double lower = 0.0, upper = 0.0;
  double alpha1 = 0.0, alpha2 = 0.0;
  bool simultaneous = false;
  int joint_group = -1;
  int draws_used = 0;
  int draw_failures = 0;
  int active_constraints = 0;
  std::vector<std::string> diagnostics;
};

inline PredictionInterval assemble(double tau_hat, const M1Bounds& m1,
                                   const M2Bounds& m2, double eps_delta) {
  PredictionInterval out;
  out.tau_hat = tau_hat;
  out.m1l = m1.m1l;
  out.m1u = m1.m1u;
  out.m2l = m2.m2l;
  out.m2u = m2.m2u;
  out.eps_delta = eps_delta;
  out.lower = tau_hat + m1.m1l - m2.m2u - eps_delta;
  out.upper = tau_hat + m1.m1u - m2.m2l + eps_delta;
  out.draws_used = m1.used;
  out.draw_failures = m1.failures;
  return out;
}

}  // namespace synthctrl
