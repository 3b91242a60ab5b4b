#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "synthctrl/config.hpp"
#include "synthctrl/conic.hpp"
#include "synthctrl/constraints.hpp"
#include "synthctrl/panel.hpp"
#include "synthctrl/predictands.hpp"
#include "synthctrl/uncertainty.hpp"

namespace synthctrl {

struct StudyFit {
  PanelDataset data;    // effective data (cohorts may be aggregated)
  PredictandSpec spec;  // effective predictand
  DonorPools pools;
  DesignMatrices design;
  SmoothConstraints smooth;
  VectorXd beta_hat;
  VectorXd u_hat;
  double objective = 0.0;
  ConicSolution solution;
  std::vector<std::string> notes;

  double weight(int unit, int donor) const {
    return beta_hat(design.col_weight(unit, donor));
  }
};

inline int effective_horizon(const StudyConfig& cfg) {
  return cfg.horizon ? *cfg.horizon : cfg.predictand.k;
}

// Constrained weighted least-squares fit via the conic solver.
inline StudyFit fit_study(const PanelDataset& data, const StudyConfig& cfg) {
  cfg.validate();
  StudyFit fit;
  fit.spec = cfg.predictand;
  if (cfg.predictand.kind == PredictandSpec::Kind::CohortAtt &&
      cfg.predictand.strategy == PredictandSpec::CohortStrategy::AggregateUnit) {
    fit.data = aggregate_cohort(data, cfg.predictand.s0, &fit.notes);
    fit.spec.kind = PredictandSpec::Kind::Individual;
    fit.spec.unit = "ave";
  } else {
    fit.data = data;
  }

  PredictandSpec pool_spec = fit.spec;
  pool_spec.k = effective_horizon(cfg);
  fit.pools = resolve_donor_pool(fit.data, pool_spec);

  BuildOptions opts;
  opts.adjust = cfg.adjust;
  opts.anticipation = cfg.anticipation;
  opts.fit_mode = cfg.fit_mode;
  opts.standardize_features = cfg.standardize_features;
  fit.design = build_design(fit.data, fit.pools, opts);

  const FitProgram fp = canonicalize_fit(fit.design, cfg.constraint);
  fit.solution = solve(fp.program, cfg.solver);
  if (fit.solution.status != SolveStatus::Optimal)
    throw Error(ErrorCode::SolverFailure,
                std::string("weight fit did not reach optimality (status ") +
                    status_name(fit.solution.status) + ")");
  fit.beta_hat = fit.solution.x.head(fit.design.d());
  fit.objective = fit.solution.objective;
  fit.u_hat = fit.design.A - fit.design.Z * fit.beta_hat;
  fit.smooth = to_smooth(cfg.constraint, fit.design.layout);
  return fit;
}

struct UncertaintyModel {
  RhoTuning rho;
  RelaxedSet relaxed;
  VectorXd mu_hat;
  MatrixXd sigma_hat;
  MatrixXd qhat;
  MatrixXd qhat_half;
  std::vector<std::string> notes;
};

inline UncertaintyModel prepare_uncertainty(const StudyFit& fit,
                                            const StudyConfig& cfg) {
  UncertaintyModel um;
  um.rho = tune_rho(fit.design, fit.smooth, fit.beta_hat, fit.u_hat,
                    cfg.cointegrated, cfg.rho_constant);
  um.relaxed = relax(fit.smooth, fit.beta_hat, um.rho.rho_ineq);
  um.mu_hat = estimate_conditional_mean(fit.design, fit.u_hat, &um.notes);
  if (cfg.serial_correlation) {
    um.sigma_hat = estimate_sigma_newey_west(fit.design, fit.u_hat, um.mu_hat);
    um.notes.push_back("Sigma_hat: Newey-West lag window (Bartlett)");
  } else {
    MomentModel details;
    um.sigma_hat = estimate_sigma(fit.design, fit.u_hat, um.mu_hat,
                                  cfg.sigma_method, &details);
    um.notes.insert(um.notes.end(), details.notes.begin(), details.notes.end());
  }
  um.qhat = fit.design.Z.transpose() * fit.design.V * fit.design.Z;
  um.qhat_half = psd_sqrt(um.qhat);
  for (const auto& w : um.relaxed.warnings) um.notes.push_back(w);
  for (const auto& n : um.rho.notes) um.notes.push_back(n);
  return um;
}

struct StudyIntervals {
  std::vector<PredictionInterval> pointwise;
  std::vector<PredictionInterval> joint;
  std::vector<std::string> notes;
};

namespace detail {

struct Target {
  int k = 0;  // period offset; -1 for the post-treatment average
  PredictorVector predictor;
  double tau_hat = 0.0;
  double eps_delta = 0.0;
};

inline std::vector<int> predictor_units(const PredictorVector& p) {
  std::set<int> units;
  for (const auto& row : p.post_rows) units.insert(row.unit);
  return {units.begin(), units.end()};
}

// Out-of-sample mean/scale per post row of one predictor, collapsing the
// per-unit fits at the target regressors.
inline void oos_at_targets(const StudyFit& fit,
                           std::map<int, UnitOosFit>& unit_fits,
                           const PredictorVector& p,
                           std::vector<double>& means,
                           std::vector<double>& sigmas) {
  for (const auto& row : p.post_rows) {
    auto it = unit_fits.find(row.unit);
    if (it == unit_fits.end())
      it = unit_fits
               .emplace(row.unit, fit_unit_oos(fit.data, fit.design,
                                               fit.beta_hat, row.unit))
               .first;
    const VectorXd x = oos_regressor(fit.data, fit.design, row.unit, row.t);
    means.push_back(it->second.mean_at(x));
    sigmas.push_back(it->second.sigma_at(x));
  }
}

}  // namespace detail

// Point predictions plus pointwise (and optionally simultaneous) prediction
// intervals for the configured predictand; a horizon yields one row per
// post-treatment offset k with shared simulation draws.
inline StudyIntervals intervals_study(const StudyFit& fit,
                                      const UncertaintyModel& um,
                                      const StudyConfig& cfg) {
  StudyIntervals out;
  std::vector<detail::Target> targets;
  const bool series = fit.spec.kind != PredictandSpec::Kind::UnitAverage &&
                      cfg.horizon.has_value();
  std::vector<int> ks;
  if (fit.spec.kind == PredictandSpec::Kind::UnitAverage)
    ks.push_back(-1);
  else if (series)
    for (int k = 0; k <= *cfg.horizon; ++k) ks.push_back(k);
  else
    ks.push_back(fit.spec.k);

  for (int k : ks) {
    detail::Target tgt;
    tgt.k = k;
    PredictandSpec spec_k = fit.spec;
    if (k >= 0) spec_k.k = k;
    tgt.predictor = build_predictor(spec_k, fit.data, fit.design);
    tgt.tau_hat = tgt.predictor.observed - tgt.predictor.p_tau.dot(fit.beta_hat);
    const auto eps =
        epsilon_delta(fit.smooth, fit.beta_hat, tgt.predictor.p_tau,
                      um.rho.rho_unit, detail::predictor_units(tgt.predictor),
                      fit.design.layout);
    tgt.eps_delta = eps.value;
    for (const auto& n : eps.notes) out.notes.push_back(n);
    targets.push_back(std::move(tgt));
  }

  std::vector<VectorXd> p_taus;
  for (const auto& t : targets) p_taus.push_back(t.predictor.p_tau);
  InsampleOptions iopts;
  iopts.delta_cap = cfg.delta_cap;
  iopts.solver = cfg.solver;
  iopts.threads = cfg.threads;
  const InsampleDraws draws =
      run_insample_draws(cfg.draws, cfg.seed, p_taus, um.qhat_half,
                         um.sigma_hat, um.relaxed, iopts);

  std::map<int, UnitOosFit> unit_fits;
  std::vector<double> joint_means, joint_sigmas, eps_list;
  auto fill_common = [&](PredictionInterval& pi, const detail::Target& tgt) {
    pi.period = tgt.k;
    pi.label = tgt.predictor.label;
    pi.alpha1 = cfg.alpha1;
    pi.alpha2 = cfg.alpha2;
    pi.active_constraints = um.relaxed.active_count();
    pi.diagnostics.push_back(
        "theorem error constants (epsilon, pi): not computed");
    for (const auto& n : tgt.predictor.notes) pi.diagnostics.push_back(n);
  };

  for (size_t i = 0; i < targets.size(); ++i) {
    const auto& tgt = targets[i];
    const M1Bounds m1 = pointwise_m1(draws, static_cast<int>(i), cfg.alpha1);
    std::vector<double> means, sigmas;
    detail::oos_at_targets(fit, unit_fits, tgt.predictor, means, sigmas);
    M2Bounds m2;
    switch (cfg.oos_method) {
      case OosMethod::Subgaussian:
        m2 = outsample_subgaussian(means, sigmas, cfg.alpha2, cfg.sigma_combine);
        break;
      case OosMethod::LocationScale:
      case OosMethod::QuantileReg: {
        if (tgt.predictor.post_rows.size() != 1)
          throw Error(ErrorCode::ConfigError,
                      "location-scale and quantile methods support "
                      "single-period predictands only");
        const auto& row = tgt.predictor.post_rows[0];
        const VectorXd x = oos_regressor(fit.data, fit.design, row.unit, row.t);
        const auto& ufit = unit_fits.at(row.unit);
        m2 = cfg.oos_method == OosMethod::LocationScale
                 ? outsample_location_scale(ufit, x, cfg.alpha2)
                 : outsample_quantile(ufit, x, cfg.alpha2, cfg.solver);
        break;
      }
    }
    PredictionInterval pi = assemble(tgt.tau_hat, m1, m2, tgt.eps_delta);
    fill_common(pi, tgt);
    out.pointwise.push_back(std::move(pi));
    // per-target collapsed mean and dependence-agnostic scale for the joint bands
    double mc = 0.0, sc = 0.0;
    for (double v : means) mc += v;
    for (double s : sigmas) sc += s;
    joint_means.push_back(means.empty() ? 0.0 : mc / means.size());
    joint_sigmas.push_back(sigmas.empty() ? 0.0 : sc / sigmas.size());
    eps_list.push_back(tgt.eps_delta);
  }

  if (cfg.simultaneous) {
    const M1Bounds m1j = joint_m1(draws, cfg.alpha1);
    const double eps_bar = epsilon_delta_simultaneous(eps_list);
    const MatrixXd* sigma_joint_ptr = nullptr;
    MatrixXd sigma_joint;
    if (cfg.simultaneous_method == SimultaneousMethod::Scheffe) {
      if (fit.spec.kind != PredictandSpec::Kind::Individual)
        throw Error(ErrorCode::MissingJointCovariance,
                    "Scheffe bands need a single-unit period series");
      auto it = unit_fits.find(0);
      if (it == unit_fits.end())
        it = unit_fits
                 .emplace(0, fit_unit_oos(fit.data, fit.design, fit.beta_hat, 0))
                 .first;
      sigma_joint =
          joint_error_covariance(it->second.resid, static_cast<int>(targets.size()));
      sigma_joint_ptr = &sigma_joint;
    }
    const auto m2j =
        joint_outsample(cfg.simultaneous_method, joint_means, joint_sigmas,
                        cfg.alpha2, sigma_joint_ptr);
    for (size_t i = 0; i < targets.size(); ++i) {
      PredictionInterval pi =
          assemble(targets[i].tau_hat, m1j, m2j[i], eps_bar);
      fill_common(pi, targets[i]);
      pi.simultaneous = true;
      pi.joint_group = 0;
      out.joint.push_back(std::move(pi));
    }
  }
  for (const auto& n : um.notes) out.notes.push_back(n);
  return out;
}

// ---------------------------------------------------------------------------
// Per-period series for plotting

struct PlotRow {
  std::string unit;
  int period = 0;
  bool post = false;
  double observed = kMissing;
  double synthetic = kMissing;
  double lower = kMissing, upper = kMissing;    // counterfactual interval
  double jlower = kMissing, jupper = kMissing;  // simultaneous version
  double effect = kMissing;                     // observed - synthetic
};

namespace detail {

// Predictor row without the adoption-time gate, for pre-treatment fit plots.
inline VectorXd plot_row(const PanelDataset& data, const DesignMatrices& design,
                         int i, int t) {
  const int jlen = design.layout.w_len[i];
  VectorXd row = VectorXd::Zero(jlen + design.layout.r_len[i]);
  for (int j = 0; j < jlen; ++j) {
    const double v = data.value(data.unit_index(design.donor_pools[i][j]), 0, t);
    if (is_missing(v))
      throw Error(ErrorCode::MissingDonorOutcome, "donor missing");
    row(j) = v;
  }
  int at = jlen;
  const int m = static_cast<int>(design.features.size());
  if (design.adjust.common_constant) row(at++) = 1.0;
  for (int lf = 0; lf < m; ++lf) {
    if (design.adjust.constant[lf]) row(at++) = (lf == 0) ? 1.0 : 0.0;
    if (design.adjust.linear_trend[lf])
      row(at++) = (lf == 0) ? static_cast<double>(t) : 0.0;
  }
  return row;
}

// Largest k such that every donor of unit i is still untreated at T_i + k.
inline int donor_valid_horizon(const PanelDataset& data,
                               const DesignMatrices& design, int i) {
  int cap = data.t_max - design.adoption[i];
  for (const auto& id : design.donor_pools[i]) {
    const int a = data.adoption[data.unit_index(id)];
    if (a != kNeverTreated)
      cap = std::min(cap, a - design.adoption[i] - 1);
  }
  return cap;
}

}  // namespace detail

// Observed/synthetic series per treated unit with per-period counterfactual
// intervals; post-period effects share the code path of intervals_study.
inline std::vector<PlotRow> plotdata_study(const StudyFit& fit,
                                           const UncertaintyModel& um,
                                           const StudyConfig& cfg) {
  std::vector<PlotRow> rows;
  const PanelDataset& data = fit.data;
  const DesignMatrices& design = fit.design;

  // post-period predictors per unit, pooled into one shared draw pass
  struct UnitTargets {
    std::vector<int> ks;
    std::vector<PredictorVector> predictors;
    std::vector<int> objective_index;
  };
  std::vector<UnitTargets> per_unit(design.n_treated());
  std::vector<VectorXd> p_taus;
  for (int i = 0; i < design.n_treated(); ++i) {
    int kmax = detail::donor_valid_horizon(data, design, i);
    if (cfg.horizon) kmax = std::min(kmax, *cfg.horizon);
    for (int k = 0; k <= kmax; ++k) {
      PredictandSpec spec_k;
      spec_k.kind = PredictandSpec::Kind::Individual;
      spec_k.unit = design.treated[i];
      spec_k.k = k;
      PredictorVector p;
      try {
        p = build_predictor(spec_k, data, design);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::MissingDonorOutcome ||
            e.code() == ErrorCode::AllRowsDropped)
          continue;  // period not plottable
        throw;
      }
      per_unit[i].ks.push_back(k);
      per_unit[i].objective_index.push_back(static_cast<int>(p_taus.size()));
      p_taus.push_back(p.p_tau);
      per_unit[i].predictors.push_back(std::move(p));
    }
  }

  InsampleOptions iopts;
  iopts.delta_cap = cfg.delta_cap;
  iopts.solver = cfg.solver;
  iopts.threads = cfg.threads;
  InsampleDraws draws;
  if (!p_taus.empty())
    draws = run_insample_draws(cfg.draws, cfg.seed, p_taus, um.qhat_half,
                               um.sigma_hat, um.relaxed, iopts);

  std::map<int, UnitOosFit> unit_fits;
  for (int i = 0; i < design.n_treated(); ++i) {
    const int u = data.unit_index(design.treated[i]);
    // pre-treatment fit
    for (int t = data.t_min; t < design.adoption[i]; ++t) {
      PlotRow row;
      row.unit = design.treated[i];
      row.period = t;
      row.post = false;
      row.observed = data.value(u, 0, t);
      VectorXd block(design.layout.w_len[i] + design.layout.r_len[i]);
      block.head(design.layout.w_len[i]) = fit.beta_hat.segment(
          design.layout.w_offset[i], design.layout.w_len[i]);
      block.tail(design.layout.r_len[i]) = fit.beta_hat.segment(
          design.layout.r_offset[i], design.layout.r_len[i]);
      try {
        row.synthetic = detail::plot_row(data, design, i, t).dot(block);
      } catch (const Error&) {
        // synthetic not computable at this period
      }
      rows.push_back(std::move(row));
    }
    // post periods
    const auto& ut = per_unit[i];
    for (size_t j = 0; j < ut.ks.size(); ++j) {
      const int k = ut.ks[j];
      const int t = design.adoption[i] + k;
      const auto& p = ut.predictors[j];
      PlotRow row;
      row.unit = design.treated[i];
      row.period = t;
      row.post = true;
      row.observed = p.observed;
      const double synthetic = p.p_tau.dot(fit.beta_hat);
      row.synthetic = synthetic;
      row.effect = p.observed - synthetic;

      const M1Bounds m1 = pointwise_m1(draws, ut.objective_index[j], cfg.alpha1);
      auto it = unit_fits.find(i);
      if (it == unit_fits.end())
        it = unit_fits
                 .emplace(i, fit_unit_oos(data, design, fit.beta_hat, i))
                 .first;
      const VectorXd x = oos_regressor(data, design, i, t);
      const double mean = it->second.mean_at(x);
      const double sigma = it->second.sigma_at(x);
      const M2Bounds m2 = outsample_subgaussian({mean}, {sigma}, cfg.alpha2);
      const auto eps =
          epsilon_delta(fit.smooth, fit.beta_hat, p.p_tau, um.rho.rho_unit, {i},
                        design.layout);
      // counterfactual scale: Y(infinity) in [p'b - M1U + M2L - eps, ...]
      row.lower = synthetic - m1.m1u + m2.m2l - eps.value;
      row.upper = synthetic - m1.m1l + m2.m2u + eps.value;
      rows.push_back(std::move(row));
    }
    if (cfg.simultaneous && !ut.ks.empty()) {
      const M1Bounds m1j = joint_m1(draws, cfg.alpha1, ut.objective_index);
      std::vector<double> means, sigmas, epss;
      for (size_t j = 0; j < ut.ks.size(); ++j) {
        const int t = design.adoption[i] + ut.ks[j];
        const VectorXd x = oos_regressor(data, design, i, t);
        means.push_back(unit_fits.at(i).mean_at(x));
        sigmas.push_back(unit_fits.at(i).sigma_at(x));
        epss.push_back(epsilon_delta(fit.smooth, fit.beta_hat,
                                     ut.predictors[j].p_tau, um.rho.rho_unit,
                                     {i}, design.layout)
                           .value);
      }
      const double eps_bar = epsilon_delta_simultaneous(epss);
      const auto m2j = joint_outsample(cfg.simultaneous_method, means, sigmas,
                                       cfg.alpha2, nullptr);
      // attach to the already-emitted post rows of this unit
      size_t rj = rows.size() - ut.ks.size();
      for (size_t j = 0; j < ut.ks.size(); ++j, ++rj) {
        const double synthetic = rows[rj].synthetic;
        rows[rj].jlower = synthetic - m1j.m1u + m2j[j].m2l - eps_bar;
        rows[rj].jupper = synthetic - m1j.m1l + m2j[j].m2u + eps_bar;
      }
    }
  }
  return rows;
}

}  // namespace synthctrl
