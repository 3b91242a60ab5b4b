#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "synthctrl/harness.hpp"
#include "synthctrl/pipeline.hpp"

namespace synthctrl {

// Reports are emitted through this tiny writer so every floating-point value
// is printed with 17 significant digits, making output byte-reproducible.
class JsonWriter {
 public:
  std::string str() && { return std::move(out_); }

  void begin_object() { open('{'); }
  void end_object() { close('}'); }
  void begin_array() { open('['); }
  void end_array() { close(']'); }

  void key(const std::string& k) {
    comma();
    write_string(k);
    out_ += ":";
    pending_value_ = true;
  }
  void value(const std::string& v) { prefix(); write_string(v); }
  void value(const char* v) { value(std::string(v)); }
  void value(double v) {
    prefix();
    if (std::isnan(v)) {
      out_ += "null";
    } else if (std::isinf(v)) {
      write_string(v > 0 ? "inf" : "-inf");
    } else {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out_ += buf;
    }
  }
  void value(long long v) {
    prefix();
    out_ += std::to_string(v);
  }
  void value(int v) { value(static_cast<long long>(v)); }
  void value(bool v) {
    prefix();
    out_ += v ? "true" : "false";
  }
  void null() {
    prefix();
    out_ += "null";
  }

 private:
  void open(char c) {
    prefix();
    out_ += c;
    first_.push_back(true);
  }
  void close(char c) {
    out_ += c;
    first_.pop_back();
  }
  void comma() {
    if (!first_.empty()) {
      if (!first_.back()) out_ += ",";
      first_.back() = false;
    }
  }
  void prefix() {
    if (pending_value_)
      pending_value_ = false;
    else
      comma();
  }
  void write_string(const std::string& s) {
    out_ += '"';
    for (char c : s) {
      switch (c) {
        case '"': out_ += "\\\""; break;
        case '\\': out_ += "\\\\"; break;
        case '\n': out_ += "\\n"; break;
        case '\t': out_ += "\\t"; break;
        case '\r': out_ += "\\r"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "\\u%04x", c);
            out_ += buf;
          } else {
            out_ += c;
          }
      }
    }
    out_ += '"';
  }

  std::string out_;
  std::vector<bool> first_;
  bool pending_value_ = false;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline void write_notes(JsonWriter& w, const std::vector<std::string>& notes) {
  w.key("notes");
  w.begin_array();
  for (const auto& n : notes) w.value(n);
  w.end_array();
}

inline std::string describe_constraint(const SmoothConstraint& c,
                                       const DesignMatrices& design) {
  const std::string unit = design.treated[c.unit];
  switch (c.kind) {
    case SmoothConstraint::Kind::SumToOne: return "sum_to_one[" + unit + "]";
    case SmoothConstraint::Kind::NonNeg: {
      const int donor = c.coord - design.layout.w_offset[c.unit];
      return "nonneg[" + unit + "," + design.donor_pools[c.unit][donor] + "]";
    }
    case SmoothConstraint::Kind::L2Ball: return "l2_ball[" + unit + "]";
    case SmoothConstraint::Kind::L1Budget: return "l1_budget[" + unit + "]";
  }
  return "?";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// estimate

inline std::string weights_report_json(const StudyFit& fit) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version"); w.value(1);
  w.key("command"); w.value("estimate");
  w.key("objective"); w.value(fit.objective);
  w.key("status"); w.value(status_name(fit.solution.status));
  w.key("iterations"); w.value(fit.solution.iterations);
  w.key("primal_residual"); w.value(fit.solution.primal_res);
  w.key("dual_residual"); w.value(fit.solution.dual_res);
  w.key("duality_gap"); w.value(fit.solution.gap);
  w.key("units");
  w.begin_array();
  for (int i = 0; i < fit.design.n_treated(); ++i) {
    w.begin_object();
    w.key("unit"); w.value(fit.design.treated[i]);
    w.key("adoption"); w.value(fit.design.adoption[i]);
    w.key("t0"); w.value(fit.design.t0[i]);
    w.key("weights");
    w.begin_array();
    for (int j = 0; j < fit.design.layout.w_len[i]; ++j) {
      w.begin_object();
      w.key("donor"); w.value(fit.design.donor_pools[i][j]);
      w.key("weight"); w.value(fit.weight(i, j));
      w.end_object();
    }
    w.end_array();
    w.key("coefficients");
    w.begin_array();
    for (int k = 0; k < fit.design.layout.r_len[i]; ++k)
      w.value(fit.beta_hat(fit.design.layout.r_offset[i] + k));
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.key("active_constraints");
  w.begin_array();
  {
    VectorXd beta = fit.beta_hat;
    for (const auto& con : fit.smooth.ineq)
      if (con.value(beta) > -1e-7)
        w.value(detail::describe_constraint(con, fit.design));
  }
  w.end_array();
  detail::write_notes(w, fit.notes);
  w.end_object();
  return std::move(w).str();
}

inline std::string weights_report_csv(const StudyFit& fit) {
  std::string out = "unit,donor,weight\n";
  for (int i = 0; i < fit.design.n_treated(); ++i)
    for (int j = 0; j < fit.design.layout.w_len[i]; ++j)
      out += fit.design.treated[i] + "," + fit.design.donor_pools[i][j] + "," +
             format_double(fit.weight(i, j)) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// intervals

namespace detail {

inline void interval_fields(JsonWriter& w, const PredictionInterval& pi) {
  w.begin_object();
  w.key("label"); w.value(pi.label);
  w.key("k"); w.value(pi.period);
  w.key("tau_hat"); w.value(pi.tau_hat);
  w.key("lower"); w.value(pi.lower);
  w.key("upper"); w.value(pi.upper);
  w.key("m1l"); w.value(pi.m1l);
  w.key("m1u"); w.value(pi.m1u);
  w.key("m2l"); w.value(pi.m2l);
  w.key("m2u"); w.value(pi.m2u);
  w.key("eps_delta"); w.value(pi.eps_delta);
  w.key("alpha1"); w.value(pi.alpha1);
  w.key("alpha2"); w.value(pi.alpha2);
  w.key("simultaneous"); w.value(pi.simultaneous);
  w.key("joint_group");
  if (pi.joint_group >= 0)
    w.value(pi.joint_group);
  else
    w.null();
  w.key("draws_used"); w.value(pi.draws_used);
  w.key("draw_failures"); w.value(pi.draw_failures);
  w.key("active_constraints"); w.value(pi.active_constraints);
  w.key("diagnostics");
  w.begin_array();
  for (const auto& d : pi.diagnostics) w.value(d);
  w.end_array();
  w.end_object();
}

}  // namespace detail

inline std::string intervals_report_json(const StudyIntervals& si,
                                         const StudyConfig& cfg) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version"); w.value(1);
  w.key("command"); w.value("intervals");
  w.key("alpha1"); w.value(cfg.alpha1);
  w.key("alpha2"); w.value(cfg.alpha2);
  w.key("draws"); w.value(cfg.draws);
  w.key("seed"); w.value(static_cast<long long>(cfg.seed));
  w.key("rows");
  w.begin_array();
  for (const auto& pi : si.pointwise) detail::interval_fields(w, pi);
  for (const auto& pi : si.joint) detail::interval_fields(w, pi);
  w.end_array();
  detail::write_notes(w, si.notes);
  w.end_object();
  return std::move(w).str();
}

inline std::string intervals_report_csv(const StudyIntervals& si) {
  std::string out =
      "label,k,tau_hat,lower,upper,m1l,m1u,m2l,m2u,eps_delta,alpha1,alpha2,"
      "simultaneous,joint_group,draws_used,draw_failures\n";
  auto row = [&](const PredictionInterval& pi) {
    out += pi.label + "," + std::to_string(pi.period) + "," +
           format_double(pi.tau_hat) + "," + format_double(pi.lower) + "," +
           format_double(pi.upper) + "," + format_double(pi.m1l) + "," +
           format_double(pi.m1u) + "," + format_double(pi.m2l) + "," +
           format_double(pi.m2u) + "," + format_double(pi.eps_delta) + "," +
           format_double(pi.alpha1) + "," + format_double(pi.alpha2) + "," +
           (pi.simultaneous ? "true" : "false") + "," +
           (pi.joint_group >= 0 ? std::to_string(pi.joint_group) : "") + "," +
           std::to_string(pi.draws_used) + "," +
           std::to_string(pi.draw_failures) + "\n";
  };
  for (const auto& pi : si.pointwise) row(pi);
  for (const auto& pi : si.joint) row(pi);
  return out;
}

// ---------------------------------------------------------------------------
// coverage

inline std::string coverage_report_json(const CoverageReport& r,
                                        const DgpSpec& dgp) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version"); w.value(1);
  w.key("command"); w.value("coverage");
  w.key("predictand"); w.value(r.predictand_label);
  w.key("replications"); w.value(r.replications);
  w.key("covered"); w.value(r.covered);
  w.key("coverage"); w.value(r.coverage);
  w.key("mean_width"); w.value(r.mean_width);
  w.key("mean_tau_hat"); w.value(r.mean_tau_hat);
  w.key("true_tau"); w.value(r.true_tau);
  w.key("rep_failures"); w.value(r.rep_failures);
  w.key("solver_failure_rate"); w.value(r.solver_failure_rate);
  w.key("dgp");
  w.begin_object();
  w.key("j"); w.value(dgp.j);
  w.key("t0"); w.value(dgp.t0);
  w.key("t_post"); w.value(dgp.t_post);
  w.key("sigma"); w.value(dgp.sigma);
  w.key("effect"); w.value(dgp.effect);
  w.key("error_law");
  w.value(dgp.law == ErrorLaw::IidGaussian
              ? "iid_gaussian"
              : dgp.law == ErrorLaw::Ar1 ? "ar1" : "cointegrated");
  w.key("adoption_gaps");
  w.begin_array();
  for (int g : dgp.adoption_gaps) w.value(g);
  w.end_array();
  w.end_object();
  detail::write_notes(w, r.notes);
  w.end_object();
  return std::move(w).str();
}

// ---------------------------------------------------------------------------
// plotdata

inline std::string plotdata_json(const std::vector<PlotRow>& rows) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version"); w.value(1);
  w.key("command"); w.value("plotdata");
  w.key("rows");
  w.begin_array();
  for (const auto& r : rows) {
    w.begin_object();
    w.key("unit"); w.value(r.unit);
    w.key("period"); w.value(r.period);
    w.key("post"); w.value(r.post);
    w.key("observed"); w.value(r.observed);
    w.key("synthetic"); w.value(r.synthetic);
    w.key("effect"); w.value(r.effect);
    w.key("lower"); w.value(r.lower);
    w.key("upper"); w.value(r.upper);
    w.key("joint_lower"); w.value(r.jlower);
    w.key("joint_upper"); w.value(r.jupper);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return std::move(w).str();
}

inline std::string plotdata_csv(const std::vector<PlotRow>& rows) {
  std::string out =
      "unit,period,post,observed,synthetic,effect,lower,upper,joint_lower,"
      "joint_upper\n";
  for (const auto& r : rows)
    out += r.unit + "," + std::to_string(r.period) + "," +
           (r.post ? "true" : "false") + "," + format_double(r.observed) + "," +
           format_double(r.synthetic) + "," + format_double(r.effect) + "," +
           format_double(r.lower) + "," + format_double(r.upper) + "," +
           format_double(r.jlower) + "," + format_double(r.jupper) + "\n";
  return out;
}

}  // namespace synthctrl
