#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "synthctrl/panel.hpp"

namespace synthctrl {

// Predictor vector p_tau in beta coordinates plus the observed part of the
// predicted effect: tau_hat = observed - p_tau' beta_hat.
struct PredictorVector {
  VectorXd p_tau;
  double observed = 0.0;
  std::string label;
  // per-period rows used (unit index, period, block vector over the unit's
  // beta block), before zero padding
  struct PostRow {
    int unit;
    int t;
    VectorXd block;
  };
  std::vector<PostRow> post_rows;
  int effective_count = 0;  // units/periods entering an averaged predictand
  std::vector<std::string> notes;
};

// Post-treatment predictor row for treated unit `i` at period `t`:
// donor outcomes in donor-column order, then the covariate values matching
// the unit's C-block layout for the outcome feature.
inline VectorXd build_post_row(const PanelDataset& data,
                               const DesignMatrices& design, int i, int t) {
  if (i < 0 || i >= design.n_treated())
    throw Error(ErrorCode::PeriodOutOfRange, "not a treated unit of this design");
  if (t < design.adoption[i])
    throw Error(ErrorCode::PeriodOutOfRange,
                "period " + std::to_string(t) + " precedes adoption of '" +
                    design.treated[i] + "'");
  if (t > data.t_max)
    throw Error(ErrorCode::PeriodOutOfRange,
                "period " + std::to_string(t) + " is beyond the panel");
  const int jlen = design.layout.w_len[i];
  VectorXd row = VectorXd::Zero(jlen + design.layout.r_len[i]);
  for (int j = 0; j < jlen; ++j) {
    const int dj = data.unit_index(design.donor_pools[i][j]);
    const double v = data.value(dj, 0, t);
    if (is_missing(v))
      throw Error(ErrorCode::MissingDonorOutcome,
                  "donor '" + design.donor_pools[i][j] + "' missing at " +
                      std::to_string(t));
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

namespace detail {

// Scatter a unit-block row into global beta coordinates.
inline void place_block(const DesignMatrices& design, int unit,
                        const VectorXd& block, double weight, VectorXd& p) {
  const int jlen = design.layout.w_len[unit];
  p.segment(design.layout.w_offset[unit], jlen) += weight * block.head(jlen);
  p.segment(design.layout.r_offset[unit], design.layout.r_len[unit]) +=
      weight * block.tail(design.layout.r_len[unit]);
}

}  // namespace detail

// Assemble p_tau and the observed component for one causal predictand.
// Cohort predictands here use the per-unit-weights strategy; the aggregate
// strategy goes through aggregate_cohort() plus an individual predictand.
inline PredictorVector build_predictor(const PredictandSpec& spec,
                                       const PanelDataset& data,
                                       const DesignMatrices& design) {
  PredictorVector out;
  out.p_tau = VectorXd::Zero(design.d());

  auto outcome = [&](int unit, int t) {
    return data.value(data.unit_index(design.treated[unit]), 0, t);
  };
  auto treated_index = [&](const std::string& id) {
    for (int i = 0; i < design.n_treated(); ++i)
      if (design.treated[i] == id) return i;
    throw Error(ErrorCode::ConfigError,
                "'" + id + "' is not a treated unit of this design");
  };

  switch (spec.kind) {
    case PredictandSpec::Kind::Individual: {
      if (spec.k < 0)
        throw Error(ErrorCode::PeriodOutOfRange, "k must be >= 0");
      const int i = treated_index(spec.unit);
      const int t = design.adoption[i] + spec.k;
      if (t > data.t_max)
        throw Error(ErrorCode::PeriodOutOfRange,
                    "period " + std::to_string(t) + " is beyond the panel");
      const VectorXd row = build_post_row(data, design, i, t);
      detail::place_block(design, i, row, 1.0, out.p_tau);
      out.post_rows.push_back({i, t, row});
      const double y = outcome(i, t);
      if (is_missing(y))
        throw Error(ErrorCode::AllRowsDropped,
                    "observed outcome missing at " + std::to_string(t));
      out.observed = y;
      out.effective_count = 1;
      out.label = "tau[" + design.treated[i] + "," + std::to_string(spec.k) + "]";
      break;
    }
    case PredictandSpec::Kind::UnitAverage: {
      const int i = treated_index(spec.unit);
      double ysum = 0.0;
      std::vector<PredictorVector::PostRow> rows;
      for (int t = design.adoption[i]; t <= data.t_max; ++t) {
        const double y = outcome(i, t);
        if (is_missing(y)) {
          out.notes.push_back("skipped period " + std::to_string(t) +
                              ": outcome missing");
          continue;
        }
        VectorXd row;
        try {
          row = build_post_row(data, design, i, t);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::MissingDonorOutcome) throw;
          out.notes.push_back("skipped period " + std::to_string(t) + ": " +
                              e.what());
          continue;
        }
        rows.push_back({i, t, row});
        ysum += y;
      }
      if (rows.empty())
        throw Error(ErrorCode::AllRowsDropped,
                    "no usable post-treatment periods for '" +
                        design.treated[i] + "'");
      const double wgt = 1.0 / static_cast<double>(rows.size());
      for (const auto& r : rows)
        detail::place_block(design, r.unit, r.block, wgt, out.p_tau);
      out.post_rows = std::move(rows);
      out.observed = ysum / static_cast<double>(out.post_rows.size());
      out.effective_count = static_cast<int>(out.post_rows.size());
      out.label = "tau[" + design.treated[i] + ",avg]";
      break;
    }
    case PredictandSpec::Kind::CohortAtt:
    case PredictandSpec::Kind::Att: {
      const bool cohort = spec.kind == PredictandSpec::Kind::CohortAtt;
      if (cohort && spec.strategy != PredictandSpec::CohortStrategy::PerUnitWeights)
        throw Error(ErrorCode::ConfigError,
                    "aggregate-unit strategy is handled via aggregate_cohort");
      if (spec.k < 0)
        throw Error(ErrorCode::PeriodOutOfRange, "k must be >= 0");
      double ysum = 0.0;
      std::vector<PredictorVector::PostRow> rows;
      for (int i = 0; i < design.n_treated(); ++i) {
        const int t = design.adoption[i] + spec.k;
        if (t > data.t_max)
          throw Error(ErrorCode::PeriodOutOfRange,
                      "period " + std::to_string(t) + " is beyond the panel");
        const double y = outcome(i, t);
        if (is_missing(y)) {
          out.notes.push_back("dropped unit '" + design.treated[i] +
                              "': outcome missing at " + std::to_string(t));
          continue;
        }
        VectorXd row;
        try {
          row = build_post_row(data, design, i, t);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::MissingDonorOutcome) throw;
          out.notes.push_back("dropped unit '" + design.treated[i] + "': " +
                              e.what());
          continue;
        }
        rows.push_back({i, t, row});
        ysum += y;
      }
      if (rows.empty())
        throw Error(ErrorCode::AllRowsDropped,
                    "no usable treated units for the averaged predictand");
      const double wgt = 1.0 / static_cast<double>(rows.size());
      for (const auto& r : rows)
        detail::place_block(design, r.unit, r.block, wgt, out.p_tau);
      out.post_rows = std::move(rows);
      out.observed = ysum / static_cast<double>(out.post_rows.size());
      out.effective_count = static_cast<int>(out.post_rows.size());
      out.label = cohort ? "tau[.," + std::to_string(spec.k) + "," +
                               std::to_string(spec.s0) + "]"
                         : "tau[.," + std::to_string(spec.k) + "]";
      break;
    }
  }
  return out;
}

// Replace the units adopting at s0 by one pseudo-unit "ave" whose features
// are the cohort means over non-missing members.
inline PanelDataset aggregate_cohort(const PanelDataset& data, int s0,
                                     std::vector<std::string>* log = nullptr) {
  std::vector<int> members;
  for (int u = 0; u < data.num_units(); ++u)
    if (data.adoption[u] == s0) members.push_back(u);
  if (members.empty())
    throw Error(ErrorCode::EmptyCohort,
                "no unit adopts treatment at " + std::to_string(s0));
  if (data.unit_index("ave") >= 0)
    throw Error(ErrorCode::ConfigError, "panel already has a unit named 'ave'");

  PanelDataset out;
  out.features = data.features;
  out.t_min = data.t_min;
  out.t_max = data.t_max;
  for (int u = 0; u < data.num_units(); ++u) {
    if (data.adoption[u] == s0) continue;
    out.units.push_back(data.units[u]);
    out.adoption.push_back(data.adoption[u]);
    out.values.push_back(data.values[u]);
  }
  const int nf = data.num_features();
  const int nt = data.num_periods();
  std::vector<std::vector<double>> ave(nf, std::vector<double>(nt, kMissing));
  for (int f = 0; f < nf; ++f)
    for (int t = 0; t < nt; ++t) {
      double sum = 0.0;
      int n = 0;
      for (int u : members) {
        const double v = data.values[u][f][t];
        if (!is_missing(v)) {
          sum += v;
          ++n;
        }
      }
      if (n > 0) {
        ave[f][t] = sum / n;
        if (n < static_cast<int>(members.size()) && log)
          log->push_back("cohort mean at t=" + std::to_string(t + data.t_min) +
                         " feature '" + data.features[f] + "' covers " +
                         std::to_string(n) + "/" +
                         std::to_string(members.size()) + " members");
      }
    }
  out.units.push_back("ave");
  out.adoption.push_back(s0);
  out.values.push_back(std::move(ave));
  finalize_panel(out);
  return out;
}

}  // namespace synthctrl
