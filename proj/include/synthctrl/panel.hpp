#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "synthctrl/errors.hpp"

namespace synthctrl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kNeverTreated = std::numeric_limits<int>::max();
constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// ---------------------------------------------------------------------------
// Panel data

// Long multi-unit multi-feature panel with absorbing treatment adoption.
// Units are ordered with the eventually-treated first, sorted by adoption
// time (ties broken by id), then the never-treated sorted by id.
struct PanelDataset {
  std::vector<std::string> units;
  std::vector<int> adoption;  // per unit; kNeverTreated if never treated
  std::vector<std::string> features;  // the outcome is features[0]
  int t_min = 0;
  int t_max = -1;
  // values[unit][feature][t - t_min]; NaN marks a missing cell
  std::vector<std::vector<std::vector<double>>> values;

  int num_units() const { return static_cast<int>(units.size()); }
  int num_features() const { return static_cast<int>(features.size()); }
  int num_periods() const { return t_max - t_min + 1; }

  int unit_index(const std::string& id) const {
    for (int i = 0; i < num_units(); ++i)
      if (units[i] == id) return i;
    return -1;
  }
  int feature_index(const std::string& id) const {
    for (int i = 0; i < num_features(); ++i)
      if (features[i] == id) return i;
    return -1;
  }
  double value(int u, int f, int t) const {
    if (t < t_min || t > t_max) return kMissing;
    return values[u][f][t - t_min];
  }
  bool has_value(int u, int f, int t) const { return !is_missing(value(u, f, t)); }

  int num_treated() const {
    int n = 0;
    for (int a : adoption)
      if (a != kNeverTreated) ++n;
    return n;
  }
  int num_never_treated() const { return num_units() - num_treated(); }
};

// Sort units into canonical order and check the staggered-adoption shape.
inline void finalize_panel(PanelDataset& p) {
  const int n = p.num_units();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const bool ta = p.adoption[a] != kNeverTreated;
    const bool tb = p.adoption[b] != kNeverTreated;
    if (ta != tb) return ta;
    if (ta && p.adoption[a] != p.adoption[b])
      return p.adoption[a] < p.adoption[b];
    return p.units[a] < p.units[b];
  });
  PanelDataset sorted = p;
  for (int i = 0; i < n; ++i) {
    sorted.units[i] = p.units[order[i]];
    sorted.adoption[i] = p.adoption[order[i]];
    sorted.values[i] = p.values[order[i]];
  }
  p = std::move(sorted);
  if (p.num_never_treated() == 0)
    throw Error(ErrorCode::NoNeverTreatedUnit,
                "panel has no never-treated unit");
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct PanelSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string treatment;  // binary 0/1 column; adoption inferred
  std::string adoption;   // adoption-time column; empty cell = never treated
  std::vector<std::string> features;  // ordered, outcome first
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline double parse_cell(const std::string& raw, const std::string& context) {
  const std::string s = trim(raw);
  if (s.empty()) return kMissing;
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size())
      throw Error(ErrorCode::NonNumericValue,
                  "non-numeric value '" + s + "' in " + context);
    return v;
  } catch (const Error&) {
    throw;
  } catch (...) {
    throw Error(ErrorCode::NonNumericValue,
                "non-numeric value '" + s + "' in " + context);
  }
}

inline long parse_int(const std::string& raw, const std::string& context) {
  const double v = parse_cell(raw, context);
  if (is_missing(v) || v != std::floor(v))
    throw Error(ErrorCode::NonNumericValue,
                "expected integer in " + context + ", got '" + raw + "'");
  return static_cast<long>(v);
}

}  // namespace detail

// Read a long-format CSV panel. Requires a header row; either a binary
// treatment column (adoption = first period with value 1) or an explicit
// adoption-time column. Empty feature cells are missing values.
inline PanelDataset load_panel(const std::string& path,
                               const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  if (schema.treatment.empty() == schema.adoption.empty())
    throw Error(ErrorCode::ConfigError,
                "exactly one of treatment/adoption columns must be given");
  if (schema.features.empty())
    throw Error(ErrorCode::ConfigError, "schema names no feature columns");

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::IoError, "empty file '" + path + "'");
  const auto header = detail::split_csv_line(line);
  auto col_of = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == name) return static_cast<int>(i);
    throw Error(ErrorCode::ConfigError, "column '" + name + "' not found");
  };
  const int c_unit = col_of(schema.unit);
  const int c_time = col_of(schema.time);
  const int c_treat = schema.treatment.empty() ? -1 : col_of(schema.treatment);
  const int c_adopt = schema.adoption.empty() ? -1 : col_of(schema.adoption);
  std::vector<int> c_feat;
  for (const auto& f : schema.features) c_feat.push_back(col_of(f));

  struct Cell {
    int time;
    std::vector<double> feat;
    double treat;   // NaN if absent
    double adopt;   // NaN if empty
  };
  std::map<std::string, std::vector<Cell>> by_unit;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    auto get = [&](int c) -> std::string {
      return c >= 0 && c < static_cast<int>(cells.size()) ? cells[c] : "";
    };
    const std::string ctx = path + ":" + std::to_string(lineno);
    Cell cell;
    const std::string unit = detail::trim(get(c_unit));
    cell.time = static_cast<int>(detail::parse_int(get(c_time), ctx));
    for (int c : c_feat) cell.feat.push_back(detail::parse_cell(get(c), ctx));
    cell.treat = c_treat >= 0 ? detail::parse_cell(get(c_treat), ctx) : kMissing;
    cell.adopt = c_adopt >= 0 ? detail::parse_cell(get(c_adopt), ctx) : kMissing;
    by_unit[unit].push_back(std::move(cell));
  }
  if (by_unit.empty())
    throw Error(ErrorCode::IoError, "no data rows in '" + path + "'");

  PanelDataset p;
  p.features = schema.features;
  int tmin = std::numeric_limits<int>::max(), tmax = std::numeric_limits<int>::min();
  for (auto& [unit, cells] : by_unit)
    for (const auto& c : cells) {
      tmin = std::min(tmin, c.time);
      tmax = std::max(tmax, c.time);
    }
  p.t_min = tmin;
  p.t_max = tmax;
  const int nt = p.num_periods();
  const int nf = p.num_features();

  for (auto& [unit, cells] : by_unit) {
    std::sort(cells.begin(), cells.end(),
              [](const Cell& a, const Cell& b) { return a.time < b.time; });
    for (size_t i = 1; i < cells.size(); ++i)
      if (cells[i].time == cells[i - 1].time)
        throw Error(ErrorCode::DuplicateCell,
                    "duplicate rows for unit '" + unit + "' at time " +
                        std::to_string(cells[i].time));
    int adopt = kNeverTreated;
    if (c_treat >= 0) {
      bool seen_on = false;
      for (const auto& c : cells) {
        if (is_missing(c.treat)) continue;
        if (c.treat != 0.0 && c.treat != 1.0)
          throw Error(ErrorCode::NonNumericValue,
                      "treatment column must be 0/1 for unit '" + unit + "'");
        if (c.treat == 1.0) {
          if (!seen_on) adopt = c.time;
          seen_on = true;
        } else if (seen_on) {
          throw Error(ErrorCode::NonAbsorbingTreatment,
                      "treatment switches 1->0 for unit '" + unit + "'");
        }
      }
    } else {
      for (const auto& c : cells) {
        if (is_missing(c.adopt)) continue;
        const int a = static_cast<int>(c.adopt);
        if (adopt != kNeverTreated && adopt != a)
          throw Error(ErrorCode::NonAbsorbingTreatment,
                      "adoption time not constant within unit '" + unit + "'");
        adopt = a;
      }
    }
    p.units.push_back(unit);
    p.adoption.push_back(adopt);
    std::vector<std::vector<double>> vals(nf, std::vector<double>(nt, kMissing));
    for (const auto& c : cells)
      for (int f = 0; f < nf; ++f) vals[f][c.time - tmin] = c.feat[f];
    p.values.push_back(std::move(vals));
  }
  finalize_panel(p);
  return p;
}

// ---------------------------------------------------------------------------
// Predictands (data side; assembly lives with the predictand operations)

struct PredictandSpec {
  enum class Kind { Individual, UnitAverage, CohortAtt, Att };
  enum class CohortStrategy { PerUnitWeights, AggregateUnit };
  Kind kind = Kind::Individual;
  std::string unit;  // individual / unit_average target
  int k = 0;         // periods after adoption
  int s0 = 0;        // cohort adoption time
  CohortStrategy strategy = CohortStrategy::PerUnitWeights;
};

struct DonorPools {
  std::vector<std::string> treated;  // analysis units, ordered by adoption
  std::vector<int> adoption;         // their T_i
  std::vector<std::vector<std::string>> pools;  // ordered lexicographically
};

// Donor eligibility per predictand family: individual tau_ik admits units
// treated after T_i+k; unit averages and the overall ATT use never-treated
// units only; cohort effects admit units treated after s0+k.
inline DonorPools resolve_donor_pool(const PanelDataset& data,
                                     const PredictandSpec& spec) {
  DonorPools out;
  auto treated_sorted = [&] {
    std::vector<int> idx;
    for (int u = 0; u < data.num_units(); ++u)
      if (data.adoption[u] != kNeverTreated) idx.push_back(u);
    return idx;  // panel order is already sorted by adoption
  };
  auto add_pool = [&](int treated_unit, auto&& eligible) {
    std::vector<std::string> pool;
    for (int u = 0; u < data.num_units(); ++u) {
      if (u == treated_unit) continue;
      if (eligible(data.adoption[u])) pool.push_back(data.units[u]);
    }
    std::sort(pool.begin(), pool.end());
    if (pool.empty())
      throw Error(ErrorCode::EmptyDonorPool,
                  "empty donor pool for treated unit '" +
                      data.units[treated_unit] + "'");
    out.pools.push_back(std::move(pool));
  };

  switch (spec.kind) {
    case PredictandSpec::Kind::Individual:
    case PredictandSpec::Kind::UnitAverage: {
      const int u = data.unit_index(spec.unit);
      if (u < 0 || data.adoption[u] == kNeverTreated)
        throw Error(ErrorCode::ConfigError,
                    "'" + spec.unit + "' is not a treated unit");
      out.treated = {data.units[u]};
      out.adoption = {data.adoption[u]};
      if (spec.kind == PredictandSpec::Kind::Individual) {
        const long cutoff = static_cast<long>(data.adoption[u]) + spec.k;
        add_pool(u, [&](int a) { return static_cast<long>(a) > cutoff; });
      } else {
        add_pool(u, [&](int a) { return a == kNeverTreated; });
      }
      break;
    }
    case PredictandSpec::Kind::CohortAtt: {
      for (int u : treated_sorted())
        if (data.adoption[u] == spec.s0) {
          out.treated.push_back(data.units[u]);
          out.adoption.push_back(spec.s0);
        }
      if (out.treated.empty())
        throw Error(ErrorCode::EmptyCohort,
                    "no unit adopts treatment at " + std::to_string(spec.s0));
      const long cutoff = static_cast<long>(spec.s0) + spec.k;
      for (const auto& id : out.treated)
        add_pool(data.unit_index(id),
                 [&](int a) { return static_cast<long>(a) > cutoff; });
      break;
    }
    case PredictandSpec::Kind::Att: {
      for (int u : treated_sorted()) {
        if (static_cast<long>(data.adoption[u]) + spec.k > data.t_max)
          throw Error(ErrorCode::PeriodOutOfRange,
                      "unit '" + data.units[u] + "' lacks " +
                          std::to_string(spec.k) + " post-treatment periods");
        out.treated.push_back(data.units[u]);
        out.adoption.push_back(data.adoption[u]);
      }
      if (out.treated.empty())
        throw Error(ErrorCode::EmptyCohort, "panel has no treated unit");
      for (const auto& id : out.treated)
        add_pool(data.unit_index(id), [&](int a) { return a == kNeverTreated; });
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Design matrices

enum class FitMode { Separate, Pooled };

struct CovariateAdjustment {
  std::vector<bool> constant;      // per feature
  std::vector<bool> linear_trend;  // per feature
  bool common_constant = false;
};

struct BuildOptions {
  CovariateAdjustment adjust;  // sized to the feature list (may be empty)
  int anticipation = 0;
  FitMode fit_mode = FitMode::Separate;
  bool standardize_features = false;
};

// Coordinates of beta = (w, r): all weight columns first, then all
// covariate-coefficient columns, grouped by treated unit within each part.
struct BetaLayout {
  int d = 0;
  int j_total = 0;
  std::vector<int> w_offset, w_len;  // per treated unit
  std::vector<int> r_offset, r_len;  // global beta coordinates
};

struct DesignMatrices {
  VectorXd A;
  MatrixXd B;  // rows x j_total, block-diagonal by treated unit
  MatrixXd C;  // rows x c_total, block-diagonal by treated unit
  MatrixXd Z;  // [B C]
  MatrixXd V;

  std::vector<std::string> treated;
  std::vector<int> adoption;
  std::vector<std::vector<std::string>> donor_pools;
  std::vector<int> t0;  // kept outcome-feature periods per treated unit

  struct RowKey {
    int unit, feature, t;
  };
  std::vector<RowKey> rows;
  std::vector<RowKey> dropped;  // rows removed for missing values

  std::vector<std::string> features;
  CovariateAdjustment adjust;
  int anticipation = 0;
  FitMode fit_mode = FitMode::Separate;
  std::vector<std::vector<double>> feature_scale;  // per unit x feature

  BetaLayout layout;

  int n_rows() const { return static_cast<int>(A.size()); }
  int n_treated() const { return static_cast<int>(treated.size()); }
  int d() const { return layout.d; }

  int col_weight(int unit, int donor) const {
    return layout.w_offset[unit] + donor;
  }
  // covariate columns per unit: [common?][feature0: const?, trend?][feature1: ...]
  int covariate_cols(int unit) const { return layout.r_len[unit]; }
  int row_index(int unit, int feature, int t) const {
    for (int r = 0; r < n_rows(); ++r)
      if (rows[r].unit == unit && rows[r].feature == feature && rows[r].t == t)
        return r;
    return -1;
  }
  // rows belonging to one treated unit (contiguous)
  std::pair<int, int> unit_rows(int unit) const {
    int lo = -1, hi = -1;
    for (int r = 0; r < n_rows(); ++r)
      if (rows[r].unit == unit) {
        if (lo < 0) lo = r;
        hi = r;
      }
    return {lo, hi + 1};
  }
};

// V for the separate (identity) or pooled (averaged-error) objective.
inline MatrixXd build_weighting_matrix(FitMode mode, int t0, int m, int n1) {
  if (t0 <= 0 || m <= 0 || n1 <= 0)
    throw Error(ErrorCode::ConfigError, "weighting matrix dims must be positive");
  const int block = t0 * m;
  if (mode == FitMode::Separate)
    return MatrixXd::Identity(block * n1, block * n1);
  MatrixXd ones = MatrixXd::Ones(n1, n1) / (n1 * n1);
  MatrixXd v(block * n1, block * n1);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n1; ++j)
      v.block(i * block, j * block, block, block) =
          ones(i, j) * MatrixXd::Identity(block, block);
  return v;
}

// Stack pre-treatment features of the treated units with block-diagonal
// donor and covariate blocks. Rows with any missing value are dropped
// symmetrically from A, B and C and recorded.
inline DesignMatrices build_design(const PanelDataset& data,
                                   const DonorPools& pools,
                                   const BuildOptions& opt) {
  DesignMatrices out;
  out.treated = pools.treated;
  out.adoption = pools.adoption;
  out.donor_pools = pools.pools;
  out.features = data.features;
  out.anticipation = opt.anticipation;
  out.fit_mode = opt.fit_mode;
  const int n1 = out.n_treated();
  const int m = data.num_features();
  if (opt.anticipation < 0)
    throw Error(ErrorCode::ConfigError, "anticipation must be >= 0");

  CovariateAdjustment adj = opt.adjust;
  if (adj.constant.empty()) adj.constant.assign(m, false);
  if (adj.linear_trend.empty()) adj.linear_trend.assign(m, false);
  if (static_cast<int>(adj.constant.size()) != m ||
      static_cast<int>(adj.linear_trend.size()) != m)
    throw Error(ErrorCode::ConfigError,
                "covariate adjustment flags do not match feature count");
  out.adjust = adj;

  // beta layout
  out.layout.w_offset.resize(n1);
  out.layout.w_len.resize(n1);
  out.layout.r_offset.resize(n1);
  out.layout.r_len.resize(n1);
  int wofs = 0;
  for (int i = 0; i < n1; ++i) {
    out.layout.w_offset[i] = wofs;
    out.layout.w_len[i] = static_cast<int>(pools.pools[i].size());
    wofs += out.layout.w_len[i];
  }
  out.layout.j_total = wofs;
  int cofs = 0;
  int c_per_unit = adj.common_constant ? 1 : 0;
  for (int l = 0; l < m; ++l)
    c_per_unit += (adj.constant[l] ? 1 : 0) + (adj.linear_trend[l] ? 1 : 0);
  for (int i = 0; i < n1; ++i) {
    out.layout.r_offset[i] = wofs + cofs;
    out.layout.r_len[i] = c_per_unit;
    cofs += c_per_unit;
  }
  out.layout.d = wofs + cofs;

  // rows
  struct RowData {
    DesignMatrices::RowKey key;
    double a;
    std::vector<double> b;  // per donor
    std::vector<double> c;  // per covariate column of the unit
    double scale = 1.0;
  };
  std::vector<std::vector<RowData>> unit_rows(n1);
  out.feature_scale.assign(n1, std::vector<double>(m, 1.0));

  for (int i = 0; i < n1; ++i) {
    const int u = data.unit_index(out.treated[i]);
    const long last = static_cast<long>(out.adoption[i]) - 1 - opt.anticipation;
    if (last < data.t_min)
      throw Error(ErrorCode::InsufficientPretreatment,
                  "unit '" + out.treated[i] +
                      "' has no pre-treatment periods after anticipation");
    std::vector<int> donor_idx;
    for (const auto& id : pools.pools[i]) donor_idx.push_back(data.unit_index(id));
    for (int l = 0; l < m; ++l) {
      for (int t = data.t_min; t <= static_cast<int>(last); ++t) {
        RowData row;
        row.key = {i, l, t};
        row.a = data.value(u, l, t);
        bool missing = is_missing(row.a);
        for (int dj : donor_idx) {
          const double v = data.value(dj, l, t);
          missing = missing || is_missing(v);
          row.b.push_back(v);
        }
        if (missing) {
          out.dropped.push_back(row.key);
          continue;
        }
        if (adj.common_constant) row.c.push_back(1.0);
        for (int lf = 0; lf < m; ++lf) {
          if (adj.constant[lf]) row.c.push_back(lf == l ? 1.0 : 0.0);
          if (adj.linear_trend[lf])
            row.c.push_back(lf == l ? static_cast<double>(t) : 0.0);
        }
        unit_rows[i].push_back(std::move(row));
      }
    }
    if (unit_rows[i].empty())
      throw Error(ErrorCode::AllRowsDropped,
                  "all pre-treatment rows of unit '" + out.treated[i] +
                      "' were dropped for missing values");
    // per-feature scale of the treated unit's kept pre-treatment values
    if (opt.standardize_features) {
      for (int l = 0; l < m; ++l) {
        double sum = 0.0, sum2 = 0.0;
        int n = 0;
        for (const auto& row : unit_rows[i])
          if (row.key.feature == l) {
            sum += row.a;
            sum2 += row.a * row.a;
            ++n;
          }
        if (n >= 2) {
          const double var = (sum2 - sum * sum / n) / (n - 1);
          if (var > 0.0) out.feature_scale[i][l] = std::sqrt(var);
        }
      }
      for (auto& row : unit_rows[i])
        row.scale = 1.0 / out.feature_scale[i][row.key.feature];
    }
    int kept_outcome = 0;
    for (const auto& row : unit_rows[i])
      if (row.key.feature == 0) ++kept_outcome;
    if (kept_outcome == 0)
      throw Error(ErrorCode::AllRowsDropped,
                  "no outcome rows kept for unit '" + out.treated[i] + "'");
    out.t0.push_back(kept_outcome);
  }

  int total = 0;
  for (const auto& rs : unit_rows) total += static_cast<int>(rs.size());
  out.A.resize(total);
  out.B = MatrixXd::Zero(total, out.layout.j_total);
  out.C = MatrixXd::Zero(total, out.layout.d - out.layout.j_total);
  int at = 0;
  for (int i = 0; i < n1; ++i) {
    for (const auto& row : unit_rows[i]) {
      out.rows.push_back(row.key);
      out.A(at) = row.a * row.scale;
      for (size_t j = 0; j < row.b.size(); ++j)
        out.B(at, out.layout.w_offset[i] + static_cast<int>(j)) =
            row.b[j] * row.scale;
      for (size_t k = 0; k < row.c.size(); ++k)
        out.C(at, out.layout.r_offset[i] - out.layout.j_total +
                      static_cast<int>(k)) = row.c[k] * row.scale;
      ++at;
    }
  }
  out.Z.resize(total, out.layout.d);
  out.Z << out.B, out.C;

  if (opt.fit_mode == FitMode::Separate) {
    out.V = MatrixXd::Identity(total, total);
  } else {
    // pooled averaging needs the same kept (feature, period) pattern per unit
    for (int i = 1; i < n1; ++i) {
      bool same = unit_rows[i].size() == unit_rows[0].size();
      for (size_t r = 0; same && r < unit_rows[i].size(); ++r)
        same = unit_rows[i][r].key.feature == unit_rows[0][r].key.feature &&
               unit_rows[i][r].key.t == unit_rows[0][r].key.t;
      if (!same)
        throw Error(ErrorCode::InsufficientPretreatment,
                    "pooled fit requires aligned pre-treatment rows across "
                    "treated units");
    }
    out.V = build_weighting_matrix(FitMode::Pooled,
                                   static_cast<int>(unit_rows[0].size()), 1, n1);
  }
  return out;
}

}  // namespace synthctrl
