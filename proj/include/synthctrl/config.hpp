#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "synthctrl/constraints.hpp"
#include "synthctrl/panel.hpp"
#include "synthctrl/uncertainty.hpp"

namespace synthctrl {

// Full configuration of one estimation/uncertainty run.
struct StudyConfig {
  PredictandSpec predictand;
  std::vector<std::string> features;  // ordered, outcome first
  CovariateAdjustment adjust;
  ConstraintSpec constraint;
  FitMode fit_mode = FitMode::Separate;
  int anticipation = 0;
  double alpha1 = 0.05;
  double alpha2 = 0.05;
  int draws = 200;
  OosMethod oos_method = OosMethod::Subgaussian;
  SigmaCombine sigma_combine = SigmaCombine::DependenceAgnostic;
  std::uint64_t seed = 0;
  bool cointegrated = false;
  RhoConstant rho_constant = RhoConstant::C1;
  SigmaMethod sigma_method = SigmaMethod::HC1;
  bool serial_correlation = false;  // Newey-West Sigma_hat variant
  bool standardize_features = false;
  std::optional<double> delta_cap;
  std::optional<int> horizon;  // emit a series for k = 0..horizon
  bool simultaneous = false;
  SimultaneousMethod simultaneous_method = SimultaneousMethod::MaxIneq;
  int threads = 0;
  SolverSettings solver;

  void validate() const {
    if (!(alpha1 > 0.0 && alpha1 < 1.0) || !(alpha2 > 0.0 && alpha2 < 1.0) ||
        alpha1 + alpha2 >= 1.0)
      throw Error(ErrorCode::InvalidAlphas,
                  "alpha1, alpha2 must lie in (0,1) with alpha1 + alpha2 < 1");
    if (draws < 1)
      throw Error(ErrorCode::ConfigError, "draws must be >= 1");
    if (anticipation < 0)
      throw Error(ErrorCode::ConfigError, "anticipation must be >= 0");
    if (horizon && *horizon < 0)
      throw Error(ErrorCode::ConfigError, "horizon must be >= 0");
  }
};

// Synthetic-data study driven by the coverage subcommand.
enum class ErrorLaw { IidGaussian, Ar1, Cointegrated };

struct DgpSpec {
  int j = 10;
  int t0 = 50;
  int t_post = 10;
  int m = 1;  // generator emits the outcome feature only
  std::vector<int> adoption_gaps = {0, 5, 10};  // adoption = t0 + 1 + gap
  VectorXd w0;                                  // default: fixed interior point
  ErrorLaw law = ErrorLaw::IidGaussian;
  double sigma = 1.0;
  double phi = 0.5;
  double misspecification = 0.0;
  double effect = 1.0;
  int replications = 500;
  std::uint64_t seed = 0;

  void validate() const {
    if (j < 1 || t0 < 2 || t_post < 1 || replications < 1)
      throw Error(ErrorCode::ConfigError, "invalid DGP dimensions");
    if (std::abs(phi) >= 1.0)
      throw Error(ErrorCode::ConfigError, "AR(1) needs |phi| < 1");
    if (adoption_gaps.empty())
      throw Error(ErrorCode::ConfigError, "DGP needs at least one treated unit");
  }
};

struct RunConfig {
  StudyConfig study;
  DgpSpec dgp;
  std::string input;
  std::string output;          // empty = stdout
  std::string format = "json"; // json | csv
  int verbosity = 1;
  PanelSchema schema;
};

// ---------------------------------------------------------------------------
// Flat key = value parser with dotted keys; '#' starts a comment.

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::ConfigError, "expected boolean for '" + key + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace detail

inline std::map<std::string, std::string> read_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError,
                  "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    if (kv.count(key))
      throw Error(ErrorCode::ConfigError, "duplicate key '" + key + "'");
    kv[key] = val;
  }
  return kv;
}

inline RunConfig parse_run_config(std::istream& in) {
  auto kv = read_key_values(in);
  RunConfig cfg;
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto take_double = [&](const std::string& key) -> std::optional<double> {
    auto v = take(key);
    if (!v) return std::nullopt;
    try {
      return std::stod(*v);
    } catch (...) {
      throw Error(ErrorCode::ConfigError, "expected number for '" + key + "'");
    }
  };
  auto take_int = [&](const std::string& key) -> std::optional<long long> {
    auto v = take(key);
    if (!v) return std::nullopt;
    try {
      return std::stoll(*v);
    } catch (...) {
      throw Error(ErrorCode::ConfigError, "expected integer for '" + key + "'");
    }
  };

  if (auto v = take("input")) cfg.input = *v;
  if (auto v = take("output")) cfg.output = *v;
  if (auto v = take("format")) {
    if (*v != "json" && *v != "csv")
      throw Error(ErrorCode::ConfigError, "format must be json or csv");
    cfg.format = *v;
  }
  if (auto v = take_int("verbosity")) cfg.verbosity = static_cast<int>(*v);

  if (auto v = take("schema.unit")) cfg.schema.unit = *v;
  if (auto v = take("schema.time")) cfg.schema.time = *v;
  if (auto v = take("schema.treatment")) cfg.schema.treatment = *v;
  if (auto v = take("schema.adoption")) cfg.schema.adoption = *v;

  StudyConfig& st = cfg.study;
  if (auto v = take("features")) {
    st.features = detail::split_list(*v);
    cfg.schema.features = st.features;
  }
  if (auto v = take("covadj.common_constant"))
    st.adjust.common_constant = detail::parse_bool(*v, "covadj.common_constant");
  const auto const_list = take("covadj.constant");
  const auto trend_list = take("covadj.trend");
  {
    const int m = static_cast<int>(st.features.size());
    st.adjust.constant.assign(std::max(m, 0), false);
    st.adjust.linear_trend.assign(std::max(m, 0), false);
    auto apply = [&](const std::optional<std::string>& lst,
                     std::vector<bool>& flags, const std::string& key) {
      if (!lst) return;
      for (const auto& name : detail::split_list(*lst)) {
        if (name == "all") {
          flags.assign(flags.size(), true);
          continue;
        }
        bool found = false;
        for (int f = 0; f < m; ++f)
          if (st.features[f] == name) {
            flags[f] = true;
            found = true;
          }
        if (!found)
          throw Error(ErrorCode::ConfigError,
                      "'" + key + "' names unknown feature '" + name + "'");
      }
    };
    apply(const_list, st.adjust.constant, "covadj.constant");
    apply(trend_list, st.adjust.linear_trend, "covadj.trend");
  }

  if (auto v = take("predictand.kind")) {
    if (*v == "individual") st.predictand.kind = PredictandSpec::Kind::Individual;
    else if (*v == "unit_average") st.predictand.kind = PredictandSpec::Kind::UnitAverage;
    else if (*v == "cohort_att") st.predictand.kind = PredictandSpec::Kind::CohortAtt;
    else if (*v == "att") st.predictand.kind = PredictandSpec::Kind::Att;
    else throw Error(ErrorCode::ConfigError, "unknown predictand.kind '" + *v + "'");
  }
  if (auto v = take("predictand.unit")) st.predictand.unit = *v;
  if (auto v = take_int("predictand.k")) st.predictand.k = static_cast<int>(*v);
  if (auto v = take_int("predictand.s0")) st.predictand.s0 = static_cast<int>(*v);
  if (auto v = take("predictand.strategy")) {
    if (*v == "per_unit_weights")
      st.predictand.strategy = PredictandSpec::CohortStrategy::PerUnitWeights;
    else if (*v == "aggregate_unit")
      st.predictand.strategy = PredictandSpec::CohortStrategy::AggregateUnit;
    else
      throw Error(ErrorCode::ConfigError, "unknown predictand.strategy '" + *v + "'");
  }
  if (auto v = take_int("horizon")) st.horizon = static_cast<int>(*v);

  if (auto v = take("fit.mode")) {
    if (*v == "separate") st.fit_mode = FitMode::Separate;
    else if (*v == "pooled") st.fit_mode = FitMode::Pooled;
    else throw Error(ErrorCode::ConfigError, "fit.mode must be separate or pooled");
  }
  if (auto v = take("constraint.family")) {
    if (*v == "simplex") st.constraint.family = ConstraintFamily::Simplex;
    else if (*v == "lasso") st.constraint.family = ConstraintFamily::Lasso;
    else if (*v == "ridge") st.constraint.family = ConstraintFamily::Ridge;
    else if (*v == "l1l2") st.constraint.family = ConstraintFamily::L1L2;
    else if (*v == "ols") st.constraint.family = ConstraintFamily::Ols;
    else throw Error(ErrorCode::UnsupportedFamily, "unknown constraint.family '" + *v + "'");
  }
  if (auto v = take_double("constraint.q1")) st.constraint.q1 = *v;
  if (auto v = take_double("constraint.q2")) st.constraint.q2 = *v;
  if (auto v = take("constraint.q2_per_unit"))
    for (const auto& s : detail::split_list(*v))
      st.constraint.q2_per_unit.push_back(std::stod(s));

  if (auto v = take_int("anticipation")) st.anticipation = static_cast<int>(*v);
  if (auto v = take_double("alpha1")) st.alpha1 = *v;
  if (auto v = take_double("alpha2")) st.alpha2 = *v;
  if (auto v = take_int("draws")) st.draws = static_cast<int>(*v);
  if (auto v = take_int("seed")) st.seed = static_cast<std::uint64_t>(*v);

  if (auto v = take("oos.method")) {
    if (*v == "subgaussian") st.oos_method = OosMethod::Subgaussian;
    else if (*v == "location_scale") st.oos_method = OosMethod::LocationScale;
    else if (*v == "quantile_reg") st.oos_method = OosMethod::QuantileReg;
    else throw Error(ErrorCode::ConfigError, "unknown oos.method '" + *v + "'");
  }
  if (auto v = take("oos.sigma_combine")) {
    if (*v == "dependence") st.sigma_combine = SigmaCombine::DependenceAgnostic;
    else if (*v == "independence") st.sigma_combine = SigmaCombine::Independence;
    else throw Error(ErrorCode::ConfigError, "oos.sigma_combine must be dependence or independence");
  }
  if (auto v = take("cointegrated"))
    st.cointegrated = detail::parse_bool(*v, "cointegrated");
  if (auto v = take("rho.constant")) {
    if (*v == "c1") st.rho_constant = RhoConstant::C1;
    else if (*v == "c2") st.rho_constant = RhoConstant::C2;
    else if (*v == "c3") st.rho_constant = RhoConstant::C3;
    else throw Error(ErrorCode::ConfigError, "rho.constant must be c1, c2 or c3");
  }
  if (auto v = take("sigma.method")) {
    if (*v == "hc0") st.sigma_method = SigmaMethod::HC0;
    else if (*v == "hc1") st.sigma_method = SigmaMethod::HC1;
    else if (*v == "hc2") st.sigma_method = SigmaMethod::HC2;
    else if (*v == "hc3") st.sigma_method = SigmaMethod::HC3;
    else throw Error(ErrorCode::ConfigError, "sigma.method must be hc0..hc3");
  }
  if (auto v = take("sigma.serial_correlation"))
    st.serial_correlation = detail::parse_bool(*v, "sigma.serial_correlation");
  if (auto v = take("standardize_features"))
    st.standardize_features = detail::parse_bool(*v, "standardize_features");
  if (auto v = take_double("delta_cap")) st.delta_cap = *v;
  if (auto v = take("simultaneous"))
    st.simultaneous = detail::parse_bool(*v, "simultaneous");
  if (auto v = take("simultaneous.method")) {
    if (*v == "max_ineq") st.simultaneous_method = SimultaneousMethod::MaxIneq;
    else if (*v == "bonferroni") st.simultaneous_method = SimultaneousMethod::Bonferroni;
    else if (*v == "scheffe") st.simultaneous_method = SimultaneousMethod::Scheffe;
    else throw Error(ErrorCode::ConfigError, "unknown simultaneous.method '" + *v + "'");
  }
  if (auto v = take_int("threads")) st.threads = static_cast<int>(*v);
  if (auto v = take_double("solver.tol_feas")) st.solver.tol_feas = *v;
  if (auto v = take_double("solver.tol_gap")) st.solver.tol_gap = *v;
  if (auto v = take_int("solver.max_iter")) st.solver.max_iter = static_cast<int>(*v);

  DgpSpec& dg = cfg.dgp;
  if (auto v = take_int("dgp.j")) dg.j = static_cast<int>(*v);
  if (auto v = take_int("dgp.t0")) dg.t0 = static_cast<int>(*v);
  if (auto v = take_int("dgp.t_post")) dg.t_post = static_cast<int>(*v);
  if (auto v = take("dgp.adoption_gaps")) {
    dg.adoption_gaps.clear();
    for (const auto& s : detail::split_list(*v))
      dg.adoption_gaps.push_back(std::stoi(s));
  }
  if (auto v = take("dgp.error")) {
    if (*v == "iid_gaussian") dg.law = ErrorLaw::IidGaussian;
    else if (*v == "ar1") dg.law = ErrorLaw::Ar1;
    else if (*v == "cointegrated") dg.law = ErrorLaw::Cointegrated;
    else throw Error(ErrorCode::ConfigError, "unknown dgp.error '" + *v + "'");
  }
  if (auto v = take_double("dgp.sigma")) dg.sigma = *v;
  if (auto v = take_double("dgp.phi")) dg.phi = *v;
  if (auto v = take_double("dgp.misspecification")) dg.misspecification = *v;
  if (auto v = take_double("dgp.effect")) dg.effect = *v;
  if (auto v = take_int("dgp.replications")) dg.replications = static_cast<int>(*v);
  if (auto v = take("dgp.w0")) {
    const auto parts = detail::split_list(*v);
    dg.w0.resize(static_cast<int>(parts.size()));
    for (size_t i = 0; i < parts.size(); ++i) dg.w0(static_cast<int>(i)) = std::stod(parts[i]);
  }
  dg.seed = st.seed;

  if (!kv.empty())
    throw Error(ErrorCode::ConfigError, "unknown config key '" + kv.begin()->first + "'");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
  return parse_run_config(in);
}

}  // namespace synthctrl
