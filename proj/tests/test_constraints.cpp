#include <catch2/catch_amalgamated.hpp>

#include "synthctrl/constraints.hpp"
#include "synthctrl/predictands.hpp"
#include "test_helpers.hpp"

using namespace synthctrl;

namespace {

BetaLayout layout_single(int j, int r = 0) {
  BetaLayout l;
  l.j_total = j;
  l.w_offset = {0};
  l.w_len = {j};
  l.r_offset = {j};
  l.r_len = {r};
  l.d = j + r;
  return l;
}

}  // namespace

TEST_CASE("simplex smooth representation has one equality and J inequalities") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::Simplex;
  const auto smooth = to_smooth(spec, layout_single(3));
  REQUIRE(smooth.eq.size() == 1);
  REQUIRE(smooth.ineq.size() == 3);
  REQUIRE(smooth.unit_ineq[0].size() == 3);
}

TEST_CASE("ridge inequality gradient and Hessian") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::L1L2;
  spec.q1 = 1.0;
  spec.q2 = 0.9;
  const auto smooth = to_smooth(spec, layout_single(2));
  // find the ball constraint
  const SmoothConstraint* ball = nullptr;
  for (const auto& c : smooth.ineq)
    if (c.kind == SmoothConstraint::Kind::L2Ball) ball = &c;
  REQUIRE(ball != nullptr);
  VectorXd w(2);
  w << 0.6, 0.4;
  const VectorXd g = ball->gradient(w);
  REQUIRE(g(0) == Catch::Approx(1.2));
  REQUIRE(g(1) == Catch::Approx(0.8));
  REQUIRE(ball->hessian_opnorm() == 2.0);
}

TEST_CASE("l1l2 requires a nonempty feasible set") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::L1L2;
  spec.q1 = 1.0;
  spec.q2 = 0.3;  // < 1/sqrt(3)
  REQUIRE_THROWS_MATCHES(to_smooth(spec, layout_single(3)), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::ConfigError;
                         }));
}

// ---------------------------------------------------------------------------

TEST_CASE("rho formula values") {
  REQUIRE(rho_formula(1.0, 100, 0.5) == Catch::Approx(0.2145966026289347).epsilon(1e-12));
  // T0 = e is not an integer; evaluate at T0 = 3 against the closed form
  REQUIRE(rho_formula(1.0, 3, 1.0) ==
          Catch::Approx(std::log(3.0) / std::sqrt(3.0)).epsilon(1e-15));
}

TEST_CASE("rho formula is strictly decreasing in T0") {
  for (int t0 = 3; t0 <= 200; t0 += 7)
    REQUIRE(rho_formula(1.0, t0 + 1, 0.5) < rho_formula(1.0, t0, 0.5));
  for (int t0 = 3; t0 <= 200; t0 += 7)
    REQUIRE(rho_formula(1.0, t0 + 1, 1.0) < rho_formula(1.0, t0, 1.0));
}

namespace {

// small design with controllable residuals for the rho tuning
struct TunedSetup {
  DesignMatrices design;
  SmoothConstraints smooth;
  VectorXd beta_hat;
  VectorXd u_hat;
};

TunedSetup tuned_setup() {
  using synthctrl::testing::make_panel;
  using synthctrl::testing::wave;
  const auto p = make_panel(
      {{"a", 11}, {"d1", kNeverTreated}, {"d2", kNeverTreated}}, {"y"}, 1, 12,
      [](const std::string& u, int, int t) { return wave(u[0], 0, t); });
  PredictandSpec spec;
  spec.kind = PredictandSpec::Kind::Individual;
  spec.unit = "a";
  TunedSetup s;
  s.design = build_design(p, resolve_donor_pool(p, spec), BuildOptions{});
  ConstraintSpec cs;
  cs.family = ConstraintFamily::Simplex;
  s.smooth = to_smooth(cs, s.design.layout);
  s.beta_hat = VectorXd::Zero(s.design.d());
  s.beta_hat(0) = 1.0;  // vertex of the simplex
  s.u_hat = s.design.A - s.design.Z * s.beta_hat;
  return s;
}

}  // namespace

TEST_CASE("per-constraint rho uses the l1 norm of the gradient") {
  auto s = tuned_setup();
  const auto rho = tune_rho(s.design, s.smooth, s.beta_hat, s.u_hat, false);
  REQUIRE(rho.rho_unit.size() == 1);
  // non-negativity constraints have unit gradient, so rho_j = rho_unit
  for (size_t j = 0; j < s.smooth.ineq.size(); ++j)
    REQUIRE(rho.rho_ineq[j] == Catch::Approx(rho.rho_unit[0]));
}

TEST_CASE("degenerate donor scale is rejected") {
  auto s = tuned_setup();
  // flatten one donor column
  const int col = s.design.col_weight(0, 0);
  s.design.B.col(col).setConstant(2.0);
  s.design.Z.col(col).setConstant(2.0);
  REQUIRE_THROWS_MATCHES(
      tune_rho(s.design, s.smooth, s.beta_hat, s.u_hat, false), Error,
      Catch::Matchers::Predicate<Error>([](const Error& e) {
        return e.code() == ErrorCode::DegenerateScale;
      }));
}

TEST_CASE("cointegration flag switches the log exponent") {
  auto s = tuned_setup();
  const auto r1 = tune_rho(s.design, s.smooth, s.beta_hat, s.u_hat, false);
  const auto r2 = tune_rho(s.design, s.smooth, s.beta_hat, s.u_hat, true);
  const double t0 = s.design.t0[0];
  REQUIRE(r2.rho_unit[0] ==
          Catch::Approx(r1.rho_unit[0] * std::sqrt(std::log(t0))).epsilon(1e-12));
}

// ---------------------------------------------------------------------------

TEST_CASE("relaxation flags boundary constraints as active") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::Simplex;
  const auto smooth = to_smooth(spec, layout_single(3));
  VectorXd w(3);
  w << 1.0, 0.0, 0.0;
  const std::vector<double> rho(3, 0.5);
  const auto relaxed = relax(smooth, w, rho);
  REQUIRE_FALSE(relaxed.active[0]);  // m = -1 < -0.5
  REQUIRE(relaxed.active[1]);        // m = 0 > -0.5
  REQUIRE(relaxed.active[2]);
  REQUIRE(relaxed.active_count() == 2);
}

TEST_CASE("interior point yields an empty active set") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::Simplex;
  const auto smooth = to_smooth(spec, layout_single(3));
  VectorXd w = VectorXd::Constant(3, 1.0 / 3.0);
  const std::vector<double> rho(3, 0.2);
  const auto relaxed = relax(smooth, w, rho);
  REQUIRE(relaxed.active_count() == 0);
  for (double r : relaxed.rhs) REQUIRE(r == 0.0);
}

TEST_CASE("delta = 0 is always a member of the relaxed set") {
  Philox rng(7, rng_domain::kTest, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const int j = 2 + static_cast<int>(rng.next_u32() % 4);
    ConstraintSpec spec;
    spec.family = trial % 2 == 0 ? ConstraintFamily::Simplex
                                 : ConstraintFamily::L1L2;
    spec.q1 = 1.0;
    spec.q2 = 1.0;
    const auto smooth = to_smooth(spec, layout_single(j));
    VectorXd w(j);
    for (int i = 0; i < j; ++i) w(i) = rng.next_uniform();
    w /= w.sum();  // feasible for both families (||w||_2 <= 1)
    std::vector<double> rho;
    for (size_t i = 0; i < smooth.ineq.size(); ++i)
      rho.push_back(0.01 + 0.5 * rng.next_uniform());
    const auto relaxed = relax(smooth, w, rho);
    REQUIRE(relaxed.contains(VectorXd::Zero(j)));
  }
}

TEST_CASE("enlarging rho grows the active set monotonically") {
  Philox rng(11, rng_domain::kTest, 2);
  ConstraintSpec spec;
  spec.family = ConstraintFamily::Simplex;
  const auto smooth = to_smooth(spec, layout_single(4));
  for (int trial = 0; trial < 30; ++trial) {
    VectorXd w(4);
    for (int i = 0; i < 4; ++i) w(i) = rng.next_uniform();
    w /= w.sum();
    std::vector<double> rho_small, rho_big;
    for (size_t j = 0; j < smooth.ineq.size(); ++j) {
      const double r = 0.02 + 0.4 * rng.next_uniform();
      rho_small.push_back(r);
      rho_big.push_back(r * (1.5 + rng.next_uniform()));
    }
    const auto small = relax(smooth, w, rho_small);
    const auto big = relax(smooth, w, rho_big);
    for (size_t j = 0; j < smooth.ineq.size(); ++j)
      if (small.active[j]) REQUIRE(big.active[j]);
  }
}

TEST_CASE("infeasible beta_hat is rejected at the relaxation step") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::Simplex;
  const auto smooth = to_smooth(spec, layout_single(2));
  VectorXd w(2);
  w << 0.8, 0.1;  // violates the sum-to-one equality
  REQUIRE_THROWS_AS(relax(smooth, w, {0.1, 0.1}), Error);
}

// ---------------------------------------------------------------------------

TEST_CASE("epsilon_delta is exactly zero for linear families") {
  for (auto family : {ConstraintFamily::Simplex, ConstraintFamily::Lasso}) {
    ConstraintSpec spec;
    spec.family = family;
    spec.q1 = 1.0;
    const auto layout = layout_single(3);
    const auto smooth = to_smooth(spec, layout);
    VectorXd w(3);
    w << 0.5, 0.3, 0.2;
    VectorXd p = VectorXd::Ones(3);
    const auto eps = epsilon_delta(smooth, w, p, {0.3}, {0}, layout);
    REQUIRE(eps.value == 0.0);
  }
}

TEST_CASE("single-unit ridge epsilon matches the simplified formula") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::Ridge;
  spec.q2 = 1.0;
  const auto layout = layout_single(2);
  const auto smooth = to_smooth(spec, layout);
  VectorXd w(2);
  w << 0.6, 0.8;  // ||w|| = 1
  VectorXd p(2);
  p << 0.5, -0.5;  // ||p||_1 = 1
  const auto eps = epsilon_delta(smooth, w, p, {0.1}, {0}, layout);
  REQUIRE(eps.value == Catch::Approx(0.005).margin(1e-12));
}

TEST_CASE("epsilon_delta vanishes with rho and scales quadratically") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::Ridge;
  spec.q2 = 2.0;
  const auto layout = layout_single(3);
  const auto smooth = to_smooth(spec, layout);
  VectorXd w(3);
  w << 1.0, 0.5, 0.25;
  VectorXd p(3);
  p << 1.0, 1.0, 1.0;
  const auto at = [&](double rho) {
    return epsilon_delta(smooth, w, p, {rho}, {0}, layout).value;
  };
  REQUIRE(at(0.0) == 0.0);
  REQUIRE(at(0.2) == Catch::Approx(4.0 * at(0.1)).epsilon(1e-12));
  REQUIRE(at(0.1) >= 0.0);
}

TEST_CASE("singular constraint Jacobian yields the +inf sentinel") {
  ConstraintSpec spec;
  spec.family = ConstraintFamily::Ridge;
  spec.q2 = 1.0;
  const auto layout = layout_single(2);
  const auto smooth = to_smooth(spec, layout);
  const VectorXd w = VectorXd::Zero(2);  // gradient 2w = 0
  const VectorXd p = VectorXd::Ones(2);
  const auto eps = epsilon_delta(smooth, w, p, {0.1}, {0}, layout);
  REQUIRE(std::isinf(eps.value));
  REQUIRE_FALSE(eps.notes.empty());
}

TEST_CASE("simultaneous epsilon takes the maximum over periods") {
  REQUIRE(epsilon_delta_simultaneous({0.001, 0.005, 0.002}) == 0.005);
  REQUIRE(epsilon_delta_simultaneous({0.0, 0.0}) == 0.0);
  REQUIRE(epsilon_delta_simultaneous({0.42}) == 0.42);
}
