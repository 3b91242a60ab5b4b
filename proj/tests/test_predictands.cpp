#include <catch2/catch_amalgamated.hpp>

#include "synthctrl/predictands.hpp"
#include "test_helpers.hpp"

using namespace synthctrl;
using synthctrl::testing::make_panel;
using synthctrl::testing::wave;

namespace {

PanelDataset two_treated_panel() {
  // two treated units adopting at 6, three never-treated donors, t = 1..10
  return make_panel({{"a", 6},
                     {"b", 6},
                     {"d1", kNeverTreated},
                     {"d2", kNeverTreated},
                     {"d3", kNeverTreated}},
                    {"y"}, 1, 10, [](const std::string& u, int f, int t) {
                      return wave(u[0], f, t);
                    });
}

DesignMatrices design_for(const PanelDataset& p, const PredictandSpec& spec,
                          BuildOptions opt = {}) {
  return build_design(p, resolve_donor_pool(p, spec), opt);
}

}  // namespace

TEST_CASE("post row stacks donor outcomes then covariate values") {
  auto p = make_panel(
      {{"a", 6}, {"d1", kNeverTreated}, {"d2", kNeverTreated}}, {"y"}, 1, 8,
      [](const std::string& u, int, int t) { return wave(u[0], 0, t); });
  // pin donor outcomes at t = 7
  p.values[p.unit_index("d1")][0][6] = 1.1;
  p.values[p.unit_index("d2")][0][6] = 2.2;
  PredictandSpec spec;
  spec.kind = PredictandSpec::Kind::Individual;
  spec.unit = "a";
  spec.k = 1;
  BuildOptions opt;
  opt.adjust.constant = {true};
  opt.adjust.linear_trend = {true};
  const auto design = design_for(p, spec, opt);
  const VectorXd row = build_post_row(p, design, 0, 7);
  REQUIRE(row.size() == 4);
  REQUIRE(row(0) == Catch::Approx(1.1));
  REQUIRE(row(1) == Catch::Approx(2.2));
  REQUIRE(row(2) == 1.0);
  REQUIRE(row(3) == 7.0);
}

TEST_CASE("post row rejects pre-adoption periods and unknown units") {
  const auto p = two_treated_panel();
  PredictandSpec spec;
  spec.kind = PredictandSpec::Kind::Individual;
  spec.unit = "a";
  const auto design = design_for(p, spec);
  REQUIRE_THROWS_MATCHES(build_post_row(p, design, 0, 5), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::PeriodOutOfRange;
                         }));
  REQUIRE_THROWS_AS(build_post_row(p, design, 7, 8), Error);
}

TEST_CASE("second feature's covariate positions carry zeros in the post row") {
  const auto p = make_panel({{"a", 6},
                             {"d1", kNeverTreated},
                             {"d2", kNeverTreated}},
                            {"y", "x"}, 1, 8,
                            [](const std::string& u, int f, int t) {
                              return wave(u[0], f, t);
                            });
  PredictandSpec spec;
  spec.kind = PredictandSpec::Kind::Individual;
  spec.unit = "a";
  BuildOptions opt;
  opt.adjust.constant = {true, true};
  const auto design = design_for(p, spec, opt);
  const VectorXd row = build_post_row(p, design, 0, 7);
  REQUIRE(row.size() == 2 + 2);     // donors + two per-feature constants
  REQUIRE(row(2) == 1.0);           // outcome constant
  REQUIRE(row(3) == 0.0);           // other feature's constant
}

TEST_CASE("individual predictor is zero outside the target unit's block") {
  const auto p = two_treated_panel();
  PredictandSpec spec;
  spec.kind = PredictandSpec::Kind::CohortAtt;  // design holding both units
  spec.s0 = 6;
  spec.k = 2;
  const auto design = design_for(p, spec);

  PredictandSpec ind;
  ind.kind = PredictandSpec::Kind::Individual;
  ind.unit = "b";
  ind.k = 2;
  const auto pv = build_predictor(ind, p, design);
  REQUIRE(pv.p_tau.size() == design.d());
  REQUIRE(pv.p_tau.cwiseAbs().sum() > 0.0);
  // unit a's block (weights and covariates) must be all zero
  for (int j = 0; j < design.layout.w_len[0]; ++j)
    REQUIRE(pv.p_tau(design.col_weight(0, j)) == 0.0);
  const double y = p.value(p.unit_index("b"), 0, 8);
  REQUIRE(pv.observed == Catch::Approx(y));
}

TEST_CASE("att with one treated unit reduces to the individual predictand") {
  const auto p = make_panel(
      {{"a", 6}, {"d1", kNeverTreated}, {"d2", kNeverTreated}}, {"y"}, 1, 10,
      [](const std::string& u, int, int t) { return wave(u[0], 0, t); });
  PredictandSpec att;
  att.kind = PredictandSpec::Kind::Att;
  att.k = 1;
  const auto design = design_for(p, att);
  const auto pv_att = build_predictor(att, p, design);
  PredictandSpec ind;
  ind.kind = PredictandSpec::Kind::Individual;
  ind.unit = "a";
  ind.k = 1;
  const auto pv_ind = build_predictor(ind, p, design);
  REQUIRE((pv_att.p_tau - pv_ind.p_tau).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(pv_att.observed == pv_ind.observed);
}

TEST_CASE("unit average over a single post period equals individual(i, 0)") {
  const auto p = make_panel(
      {{"a", 10}, {"d1", kNeverTreated}, {"d2", kNeverTreated}}, {"y"}, 1, 10,
      [](const std::string& u, int, int t) { return wave(u[0], 0, t); });
  PredictandSpec avg;
  avg.kind = PredictandSpec::Kind::UnitAverage;
  avg.unit = "a";
  const auto design = design_for(p, avg);
  const auto pv_avg = build_predictor(avg, p, design);
  PredictandSpec ind;
  ind.kind = PredictandSpec::Kind::Individual;
  ind.unit = "a";
  ind.k = 0;
  const auto pv_ind = build_predictor(ind, p, design);
  REQUIRE((pv_avg.p_tau - pv_ind.p_tau).cwiseAbs().maxCoeff() < 1e-15);
  REQUIRE(pv_avg.observed == Catch::Approx(pv_ind.observed));
}

TEST_CASE("att predicted effect is the mean of individual effects (linearity)") {
  const auto p = two_treated_panel();
  PredictandSpec att;
  att.kind = PredictandSpec::Kind::Att;
  att.k = 2;
  const auto design = design_for(p, att);
  // arbitrary but fixed beta
  VectorXd beta = VectorXd::LinSpaced(design.d(), -0.3, 0.7);
  const auto pv_att = build_predictor(att, p, design);
  const double tau_att = pv_att.observed - pv_att.p_tau.dot(beta);
  double mean_tau = 0.0;
  for (const auto& unit : design.treated) {
    PredictandSpec ind;
    ind.kind = PredictandSpec::Kind::Individual;
    ind.unit = unit;
    ind.k = 2;
    const auto pv = build_predictor(ind, p, design);
    mean_tau += pv.observed - pv.p_tau.dot(beta);
  }
  mean_tau /= design.n_treated();
  REQUIRE(tau_att == Catch::Approx(mean_tau).margin(1e-12));
}

TEST_CASE("cohort predictor weights each member by 1/N") {
  const auto p = two_treated_panel();
  PredictandSpec spec;
  spec.kind = PredictandSpec::Kind::CohortAtt;
  spec.s0 = 6;
  spec.k = 1;
  const auto design = design_for(p, spec);
  const auto pv = build_predictor(spec, p, design);
  PredictandSpec ind_a;
  ind_a.kind = PredictandSpec::Kind::Individual;
  ind_a.unit = "a";
  ind_a.k = 1;
  PredictandSpec ind_b = ind_a;
  ind_b.unit = "b";
  const auto pa = build_predictor(ind_a, p, design);
  const auto pb = build_predictor(ind_b, p, design);
  REQUIRE((pv.p_tau - 0.5 * (pa.p_tau + pb.p_tau)).cwiseAbs().maxCoeff() < 1e-15);
  REQUIRE(pv.observed == Catch::Approx(0.5 * (pa.observed + pb.observed)));
}

TEST_CASE("out-of-range post periods are rejected") {
  const auto p = two_treated_panel();
  PredictandSpec spec;
  spec.kind = PredictandSpec::Kind::Individual;
  spec.unit = "a";
  spec.k = 2;
  const auto design = design_for(p, spec);
  PredictandSpec far = spec;
  far.k = 50;
  REQUIRE_THROWS_MATCHES(build_predictor(far, p, design), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::PeriodOutOfRange;
                         }));
}

// ---------------------------------------------------------------------------

TEST_CASE("aggregate_cohort averages member features") {
  auto p = two_treated_panel();
  p.values[p.unit_index("a")][0][7] = 2.0;  // t = 8
  p.values[p.unit_index("b")][0][7] = 4.0;
  const auto agg = aggregate_cohort(p, 6);
  REQUIRE(agg.unit_index("a") == -1);
  REQUIRE(agg.unit_index("b") == -1);
  const int ave = agg.unit_index("ave");
  REQUIRE(ave >= 0);
  REQUIRE(agg.adoption[ave] == 6);
  REQUIRE(agg.value(ave, 0, 8) == Catch::Approx(3.0));
  REQUIRE(agg.num_units() == 4);  // 3 donors + ave
}

TEST_CASE("aggregate_cohort with a single member copies it") {
  const auto p = make_panel(
      {{"a", 6}, {"d1", kNeverTreated}, {"d2", kNeverTreated}}, {"y"}, 1, 10,
      [](const std::string& u, int, int t) { return wave(u[0], 0, t); });
  const auto agg = aggregate_cohort(p, 6);
  const int ave = agg.unit_index("ave");
  for (int t = 1; t <= 10; ++t)
    REQUIRE(agg.value(ave, 0, t) ==
            Catch::Approx(p.value(p.unit_index("a"), 0, t)));
}

TEST_CASE("aggregate_cohort skips missing members and logs partial coverage") {
  auto p = two_treated_panel();
  p.values[p.unit_index("a")][0][4] = kMissing;  // t = 5
  p.values[p.unit_index("b")][0][4] = 5.0;
  std::vector<std::string> log;
  const auto agg = aggregate_cohort(p, 6, &log);
  REQUIRE(agg.value(agg.unit_index("ave"), 0, 5) == Catch::Approx(5.0));
  REQUIRE_FALSE(log.empty());
}

TEST_CASE("aggregate_cohort on an empty cohort errors") {
  const auto p = two_treated_panel();
  REQUIRE_THROWS_MATCHES(aggregate_cohort(p, 99), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::EmptyCohort;
                         }));
}
