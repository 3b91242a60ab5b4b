#pragma once

#include <string>
#include <vector>

#include "synthctrl/pipeline.hpp"
#include "synthctrl/rng.hpp"

namespace synthctrl {

inline VectorXd default_true_weights(int j) {
  VectorXd w(j);
  for (int i = 0; i < j; ++i) w(i) = static_cast<double>(j - i);
  return w / w.sum();
}

struct GeneratedPanel {
  PanelDataset data;
  double true_effect = 0.0;  // injected at every post-treatment period
  VectorXd w0;
};

// One synthetic panel: donor series per error law, treated outcome
// B w0 + u pre-treatment, treated effect added explicitly post-treatment so
// the true tau is known. Deterministic per (seed, rep).
inline GeneratedPanel generate(const DgpSpec& spec, int rep) {
  spec.validate();
  Philox rng(spec.seed, rng_domain::kHarnessRep, static_cast<std::uint64_t>(rep) + 1);
  GeneratedPanel out;
  out.w0 = spec.w0.size() > 0 ? spec.w0 : default_true_weights(spec.j);
  if (out.w0.size() != spec.j)
    throw Error(ErrorCode::ConfigError, "w0 length must equal dgp.j");
  out.true_effect = spec.effect;

  const int n1 = static_cast<int>(spec.adoption_gaps.size());
  std::vector<int> adoption(n1);
  int t_end = 0;
  for (int i = 0; i < n1; ++i) {
    adoption[i] = spec.t0 + 1 + spec.adoption_gaps[i];
    t_end = std::max(t_end, adoption[i] + spec.t_post - 1);
  }

  PanelDataset& p = out.data;
  p.features = {"y"};
  p.t_min = 1;
  p.t_max = t_end;
  const int nt = p.num_periods();

  // donors
  MatrixXd donors(spec.j, nt);
  VectorXd factor = VectorXd::Zero(nt);
  if (spec.law == ErrorLaw::Cointegrated) {
    double f = 0.0;
    for (int t = 0; t < nt; ++t) {
      f += rng.next_normal();
      factor(t) = f;
    }
  }
  for (int j = 0; j < spec.j; ++j) {
    switch (spec.law) {
      case ErrorLaw::IidGaussian:
        for (int t = 0; t < nt; ++t) donors(j, t) = rng.next_normal();
        break;
      case ErrorLaw::Ar1: {
        double prev =
            rng.next_normal() / std::sqrt(1.0 - spec.phi * spec.phi);
        for (int t = 0; t < nt; ++t) {
          prev = spec.phi * prev + rng.next_normal();
          donors(j, t) = prev;
        }
        break;
      }
      case ErrorLaw::Cointegrated:
        for (int t = 0; t < nt; ++t)
          donors(j, t) = factor(t) + rng.next_normal();
        break;
    }
  }
  char name[16];
  for (int j = 0; j < spec.j; ++j) {
    std::snprintf(name, sizeof(name), "d%02d", j + 1);
    p.units.push_back(name);
    p.adoption.push_back(kNeverTreated);
    std::vector<double> series(nt);
    for (int t = 0; t < nt; ++t) series[t] = donors(j, t);
    p.values.push_back({series});
  }

  // treated units: counterfactual = B'w0 + u (+ misspecification), observed
  // adds the effect from the adoption period on
  for (int i = 0; i < n1; ++i) {
    std::snprintf(name, sizeof(name), "t%d", i + 1);
    p.units.push_back(name);
    p.adoption.push_back(adoption[i]);
    std::vector<double> series(nt);
    double prev_u = spec.law == ErrorLaw::Ar1
                        ? spec.sigma * rng.next_normal() /
                              std::sqrt(1.0 - spec.phi * spec.phi)
                        : 0.0;
    for (int t = 0; t < nt; ++t) {
      double u;
      if (spec.law == ErrorLaw::Ar1) {
        prev_u = spec.phi * prev_u + spec.sigma * rng.next_normal();
        u = prev_u;
      } else {
        u = spec.sigma * rng.next_normal();
      }
      double y = donors.col(t).dot(out.w0) + u;
      if (spec.misspecification != 0.0)
        y += spec.misspecification * rng.next_normal();
      if (t + p.t_min >= adoption[i]) y += spec.effect;
      series[t] = y;
    }
    p.values.push_back({series});
  }
  finalize_panel(p);
  return out;
}

struct CoverageReport {
  std::string predictand_label;
  int replications = 0;
  int covered = 0;
  int rep_failures = 0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double mean_tau_hat = 0.0;
  double true_tau = 0.0;
  long total_draw_failures = 0;
  long total_draws = 0;
  double solver_failure_rate = 0.0;
  std::vector<std::string> notes;
};

// Full-pipeline Monte Carlo: empirical coverage of the configured predictand
// interval against the injected effect, plus width and failure-rate summaries.
inline CoverageReport coverage_study(const DgpSpec& dgp, const StudyConfig& base) {
  base.validate();
  dgp.validate();
  CoverageReport report;
  report.replications = dgp.replications;
  report.true_tau = dgp.effect;

  struct RepOutcome {
    bool ok = false;
    bool covered = false;
    double width = 0.0;
    double tau_hat = 0.0;
    int draw_failures = 0;
    std::string error;
  };
  std::vector<RepOutcome> outcomes(dgp.replications);

  detail::parallel_for(dgp.replications, base.threads, [&](int rep) {
    RepOutcome& oc = outcomes[rep];
    try {
      const GeneratedPanel gen = generate(dgp, rep);
      StudyConfig cfg = base;
      cfg.threads = 1;  // reps already run in parallel
      cfg.seed = Philox(base.seed, rng_domain::kHarnessRep ^ 0xA5A5u,
                        static_cast<std::uint64_t>(rep) + 1)
                     .next_u64();
      if (cfg.predictand.unit.empty() &&
          (cfg.predictand.kind == PredictandSpec::Kind::Individual ||
           cfg.predictand.kind == PredictandSpec::Kind::UnitAverage))
        cfg.predictand.unit = "t1";
      const StudyFit fit = fit_study(gen.data, cfg);
      const UncertaintyModel um = prepare_uncertainty(fit, cfg);
      const StudyIntervals si = intervals_study(fit, um, cfg);
      const PredictionInterval& pi = si.pointwise.front();
      oc.ok = true;
      oc.covered = pi.lower <= gen.true_effect && gen.true_effect <= pi.upper;
      oc.width = pi.upper - pi.lower;
      oc.tau_hat = pi.tau_hat;
      oc.draw_failures = pi.draw_failures;
    } catch (const Error& e) {
      oc.error = e.what();
    }
  });

  double width_sum = 0.0, tau_sum = 0.0;
  for (const auto& oc : outcomes) {
    if (!oc.ok) {
      ++report.rep_failures;
      if (!oc.error.empty() && report.notes.size() < 5)
        report.notes.push_back(oc.error);
      continue;
    }
    report.covered += oc.covered ? 1 : 0;
    width_sum += oc.width;
    tau_sum += oc.tau_hat;
    report.total_draw_failures += oc.draw_failures;
  }
  const int ok = dgp.replications - report.rep_failures;
  report.coverage = static_cast<double>(report.covered) / dgp.replications;
  report.mean_width = ok > 0 ? width_sum / ok : 0.0;
  report.mean_tau_hat = ok > 0 ? tau_sum / ok : 0.0;
  report.total_draws = static_cast<long>(ok) * base.draws;
  report.solver_failure_rate =
      report.total_draws > 0
          ? static_cast<double>(report.total_draw_failures) / report.total_draws
          : 0.0;
  PredictandSpec spec = base.predictand;
  if (spec.unit.empty()) spec.unit = "t1";
  switch (spec.kind) {
    case PredictandSpec::Kind::Individual:
      report.predictand_label = "tau[" + spec.unit + "," + std::to_string(spec.k) + "]";
      break;
    case PredictandSpec::Kind::UnitAverage:
      report.predictand_label = "tau[" + spec.unit + ",avg]";
      break;
    case PredictandSpec::Kind::CohortAtt:
      report.predictand_label =
          "tau[.," + std::to_string(spec.k) + "," + std::to_string(spec.s0) + "]";
      break;
    case PredictandSpec::Kind::Att:
      report.predictand_label = "tau[.," + std::to_string(spec.k) + "]";
      break;
  }
  return report;
}

}  // namespace synthctrl
