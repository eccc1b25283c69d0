#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "support/instances.hpp"
#include "synccav/micro.hpp"
#include "synccav/scenario.hpp"

using namespace synccav;
using namespace testsupport;
using mpc::BinKind;
using doctest::Approx;

namespace {

ScenarioConfig two_subjects(double x1, double y1, double v1, double x2, double y2, double v2, int T) {
  ScenarioConfig c;
  c.horizon = T;
  c.vehicles = {subject(1, x1, y1, v1), subject(2, x2, y2, v2)};
  return c;
}

}  // namespace

TEST_CASE("one step without neighbors is a box-constrained double integrator") {
  auto c = two_subjects(400, 1.8, 20, 100, 9.0, 15, 1);
  auto in = build(c, Phase::CatchUp);
  for (const auto& m : in.p.meta) CHECK(m.kind != BinKind::Order);
  auto s = mpc::solve(in.p);
  REQUIRE(s.status == mpc::SolveStatus::Optimal);
  const auto& w = in.p.weights;
  const double N = w.w_norm, vmax = c.limits.v_max;
  // minimize 1/2 q_u u^2 + 1/2 q_w (v + u - vmax)^2 / N
  for (int i = 0; i < 2; ++i) {
    double v = c.vehicles[i].state.vx;
    double u = (w.q_w1 / N) * (vmax - v) / (w.q_u + w.q_w1 / N);
    CHECK(s.u[i][0].ux == Approx(u).epsilon(1e-6));
    CHECK(s.u[i][0].uy == Approx(0).scale(1));
  }
  CHECK(s.parts.J_eta == 0);
  CHECK(s.objective == Approx(s.parts.J_u + s.parts.J_w));
}

TEST_CASE("objective terms follow the phase") {
  auto q1 = build(two_subjects(200, 1.8, 20, 150, 5.4, 20, 3), Phase::CatchUp);
  auto q2 = build(two_subjects(200, 1.8, 20, 150, 1.8, 20, 3), Phase::Platoon, 1);
  int eta_terms = 0;
  for (std::size_t v = 0; v < q1.p.meta.size(); ++v)
    if (q1.p.meta[v].kind == BinKind::Follow) eta_terms += q1.p.bin_obj[v] < 0;
  CHECK(eta_terms > 0);
  CHECK(q1.p.n_cont == q1.p.n_u);
  CHECK(q2.p.n_cont == q2.p.n_u + 3);
  for (std::size_t v = 0; v < q2.p.meta.size(); ++v)
    if (q2.p.meta[v].kind == BinKind::Follow) CHECK(q2.p.bin_obj[v] == 0);
  int same_lane_rows = 0;
  for (const auto& r : q2.p.cs.rows) same_lane_rows += r.name.rfind("same_lane", 0) == 0;
  CHECK(same_lane_rows == 3);
  auto s = mpc::solve(q2.p);
  REQUIRE(s.ok());
  CHECK(s.parts.J_eta == 0);
  CHECK(s.parts.J_z > 0);
  weights::WeightConfig bad = q1.p.weights;
  bad.q_u = -1;
  CHECK_THROWS(mpc::assemble_objective(q1.p, Phase::CatchUp, bad));
}

TEST_CASE("constraint census") {
  // 2 subjects, 2 neighbors, 3 lanes, T = 5
  ScenarioConfig c;
  c.vehicles = {subject(1, 300, 1.8, 22), subject(2, 200, 5.4, 22), hdv(3, 260, 1.8, 22), hdv(4, 240, 5.4, 20)};
  auto in = build(c, Phase::CatchUp);
  const auto& p = in.p;
  int counts[6] = {0, 0, 0, 0, 0, 0};
  for (const auto& m : p.meta) counts[static_cast<int>(m.kind)]++;
  int quad = 0;
  for (const auto& r : p.cs.rows) quad += r.quad.has_value();
  MESSAGE("vars " << p.cs.vars.size() << " rows " << p.cs.rows.size() << " gamma " << counts[1] << " order "
                  << counts[2] << " pair " << counts[3] << " cut " << counts[4] << " follow " << counts[5]
                  << " quad " << quad);
  CHECK(p.n_u == 20);
  // six per-step kinematic rows per subject plus the terminal lateral speed
  int kin = 0;
  for (const auto& r : p.cs.rows)
    for (const char* pre : {"vmin_", "vmax_", "vymin_", "vymax_", "ymin_", "ymax_", "vyT_"})
      kin += r.name.rfind(pre, 0) == 0;
  CHECK(kin == 2 * 5 * 6 + 2);
  // subjects never come within reach of each other
  CHECK(counts[3] == 0);
  // regression snapshot of the pruned model size
  CHECK(p.cs.vars.size() == 51);
  CHECK(p.cs.rows.size() == 193);
  CHECK(counts[1] == 16);
  CHECK(counts[2] == 2);
  CHECK(counts[4] == 6);
  CHECK(counts[5] == 7);
}

TEST_CASE("initial safety violation is an error") {
  auto c = two_subjects(130, 1.8, 20, 100, 1.8, 20, 3);
  CHECK_THROWS_AS(build(c, Phase::CatchUp), mpc::InfeasibleAtStart);
}

TEST_CASE("blocked follower is infeasible") {
  // single lane, both subjects at v_min 10 m apart; the gap must be 15 m and cannot open in one step
  ScenarioConfig c;
  c.horizon = 3;
  c.geometry = LaneGeometry::uniform(1, 3.6);
  c.vehicles = {subject(1, 110, 1.8, 10), subject(2, 100, 1.8, 10)};
  CHECK(micro::safety_gap(10, VehicleParams{}, c.limits) == Approx(15));
  auto in = build(c, Phase::CatchUp, 1, false);
  auto s = mpc::solve(in.p);
  CHECK(s.status == mpc::SolveStatus::Infeasible);
  auto o = mpc::brute_force_oracle(in.p, in.w, grid_for(3));
  CHECK(o.status == mpc::SolveStatus::Infeasible);
}

TEST_CASE("mirror symmetry") {
  ScenarioConfig a;
  a.horizon = 3;
  a.vehicles = {subject(1, 300, 1.8, 20), subject(2, 300, 9.0, 20), hdv(3, 380, 5.4, 18)};
  ScenarioConfig b = a;
  b.vehicles[0].state.y = 9.0;
  b.vehicles[1].state.y = 1.8;
  auto sa = mpc::solve(build(a, Phase::CatchUp).p);
  auto sb = mpc::solve(build(b, Phase::CatchUp).p);
  REQUIRE(sa.ok());
  REQUIRE(sb.ok());
  CHECK(sa.objective == Approx(sb.objective).epsilon(1e-7));
}

TEST_CASE("zero weights still yield a feasible plan") {
  auto c = two_subjects(300, 1.8, 20, 200, 5.4, 20, 2);
  c.geometry = LaneGeometry::uniform(2, 3.6);
  weights::WeightConfig w;
  w.q_u = w.q_w1 = w.q_w2 = w.q_y = w.q_eta = w.q_v = w.q_z = 0;
  w.w_norm = 1;
  auto in = build(c, Phase::CatchUp, 1, true, &w);
  auto s = mpc::solve(in.p);
  REQUIRE(s.ok());
  CHECK(s.objective == Approx(0).scale(1));
  auto o = mpc::brute_force_oracle(in.p, in.w, grid_for(2));
  CHECK(o.status == mpc::SolveStatus::Optimal);
  CHECK(o.objective == Approx(0).scale(1));
}

TEST_CASE("returned plans satisfy every row and agree with the grid oracle") {
  std::mt19937 rng(21);
  int compared = 0, infeasible = 0;
  for (int trial = 0; trial < 40; ++trial) {
    int T = 1 + trial % 3;
    Phase ph;
    auto c = random_tiny(rng, T, ph);
    if (!plan_independent(c)) continue;
    try {
      scenario::validate_scenario(c);
    } catch (const ValidationError&) {
      continue;
    }
    Instance in;
    try {
      in = build(c, ph, 1);
    } catch (const mpc::InfeasibleAtStart&) {
      continue;
    }
    auto s = mpc::solve(in.p);
    auto o = mpc::brute_force_oracle(in.p, in.w, grid_for(T));
    INFO("trial " << trial << " T " << T << " phase " << to_string(ph));
    if (s.ok()) {
      CHECK(in.p.cs.max_violation(s.values) <= 1e-6);
      CHECK(s.root_bound <= s.objective + 1e-7 * (1 + std::abs(s.objective)));
      auto e = mpc::evaluate(in.p, s.values);
      CHECK(e.total() == Approx(s.objective));
    }
    CHECK(s.ok() == (o.status == mpc::SolveStatus::Optimal));
    if (s.ok() && o.status == mpc::SolveStatus::Optimal) {
      CHECK(s.objective <= o.objective + 1e-6);
      ++compared;
    } else {
      ++infeasible;
    }
  }
  MESSAGE("compared " << compared << " infeasible " << infeasible);
  CHECK(compared >= 10);
}

TEST_CASE("predictor-corrector without neighbors converges at once") {
  auto c = two_subjects(300, 1.8, 20, 200, 5.4, 20, 5);
  auto w = world::make_world(c);
  auto wc = weights_for(c, Phase::CatchUp);
  mpc::MpcOptions opt;
  auto r = mpc::predictor_corrector_iterate(c, w, nullptr, Phase::CatchUp, 1, wc, opt);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
}
