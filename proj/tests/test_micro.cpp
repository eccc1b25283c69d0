#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "synccav/micro.hpp"

using namespace synccav;
using namespace synccav::micro;
using doctest::Approx;

namespace {
LimitSet lim() { return {}; }
VehicleParams subj() { return {}; }
VehicleParams hdv() {
  VehicleParams p;
  p.reaction_time = 2.0;
  return p;
}
}  // namespace

TEST_CASE("double integrator") {
  auto s = step_subject({0, 1.8, 10, 0.9}, {2, 0}, 1.0);
  CHECK(s.x == 11.0);
  CHECK(s.vx == 12.0);
  CHECK(s.y == Approx(2.7));
  auto z = step_subject({5, 0, 10, 0}, {0, 0}, 1.0);
  CHECK(z.x == 15.0);
  CHECK(z.vx == 10.0);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-6, 8), V(10, 33);
  for (int i = 0; i < 100; ++i) {
    Kinematics2D a{0, 0, V(rng), 0};
    double u = U(rng), dt = 0.5 + i % 3 * 0.25;
    auto b = step_subject(a, {u, 0}, dt);
    CHECK(b.x - a.x == Approx(dt * (a.vx + b.vx) / 2).epsilon(1e-12));
  }
}

// stopping-distance check: a follower that reacts after tau and brakes at a_min to v_min, behind a leader that brakes
// at a_min from the same speed down to v_min, keeps at least L when starting at the safety gap.
static double closure_min_gap(double v, const VehicleParams& p, const LimitSet& L) {
  const double h = 1e-3;
  double xf = 0, vf = v, xl = safety_gap(v, p, L), vl = v, mg = xl - xf;
  for (double t = 0; t < 60; t += h) {
    double al = vl > L.v_min ? L.a_min : 0.0;
    double af = (t >= p.reaction_time && vf > L.v_min) ? L.a_min : 0.0;
    xl += vl * h;
    xf += vf * h;
    vl = std::max(L.v_min, vl + al * h);
    vf = std::max(L.v_min, vf + af * h);
    mg = std::min(mg, xl - xf);
  }
  return mg;
}

TEST_CASE("safety gap") {
  CHECK(safety_gap(20, subj(), lim()) == Approx(5 + 20 + 100.0 / 12));
  CHECK(safety_gap(20, subj(), lim()) == Approx(33.333).epsilon(1e-4));
  CHECK(safety_gap(10, subj(), lim()) == Approx(15.0));
  CHECK(safety_gap(25, subj(), lim()) == Approx(48.75));
  LimitSet bad = lim();
  bad.a_min = 0.0;
  CHECK_THROWS(safety_gap(20, subj(), bad));
  for (double v = 10; v <= 33.33; v += 0.5) {
    CHECK(safety_gap(v + 0.1, subj(), lim()) > safety_gap(v, subj(), lim()));
    CHECK(closure_min_gap(v, subj(), lim()) >= subj().length - 1e-6);
  }
}

TEST_CASE("safety row activation") {
  LinearConstraintSet s;
  int xf = s.add_continuous("xf", 0, 1e4), vf = s.add_continuous("vf", 0, 40), xl = s.add_continuous("xl", 0, 1e4);
  int act = s.add_continuous("act", 0, 3);
  emit_subject_safety_constraints(s, "safe", Affine::var(xf), Affine::var(vf), Affine::var(xl), Affine::var(act),
                                  subj(), lim(), 1000.0);
  std::vector<double> x{0, 20, 50, 0};
  // margin = 50 - 33.333
  CHECK(s.row_lhs(s.rows[0], x) - s.rows[0].rhs == Approx(50 - 100.0 / 3));
  x[2] = 30;
  CHECK(s.violation(s.rows[0], x) > 0);
  x[3] = 1;  // deactivated
  CHECK(s.violation(s.rows[0], x) == 0);
}

TEST_CASE("Newell speed and position") {
  CHECK(newell_predict(30, hdv(), 1.0, lim()) == Approx(12.5));
  CHECK(newell_predict(200, hdv(), 1.0, lim()) == Approx(33.33));
  CHECK(newell_predict(10, hdv(), 1.0, lim()) == Approx(10.0));
  double prev = 0;
  for (double s = 0; s < 300; s += 1) {
    double v = newell_predict(s, hdv(), 1.0, lim());
    CHECK(v >= prev);
    CHECK(v >= 10.0);
    CHECK(v <= 33.33);
    prev = v;
  }
  CHECK(newell_position(100, 12.5, 2, 1) == Approx(125));
  CHECK(newell_position(100, 0, 2, 1) == Approx(100));
  CHECK(newell_position(100, 20, 1, 1) == Approx(120));
}

TEST_CASE("per-step Newell shift") {
  auto a = newell_advance(0, std::nullopt, hdv(), 1.0, lim());
  CHECK(a.v == Approx(33.33));
  auto b = newell_advance(0, 30.0, hdv(), 1.0, lim());  // lagged leader 30 m ahead, d = 5
  CHECK(b.v == Approx(25.0));
  CHECK(b.x == Approx(25.0));
  auto c = newell_advance(0, 8.0, hdv(), 1.0, lim());
  CHECK(c.v == Approx(10.0));
}

TEST_CASE("HDV spacing picks the closest downstream candidate") {
  CHECK(hdv_spacing(100, {140, 125}, 6000) == Approx(25));
  CHECK(hdv_spacing(100, {}, 6000) == 6000);
  CHECK(hdv_spacing(100, {140, 50}, 6000) == Approx(40));
}

TEST_CASE("HDV cut-in rows") {
  LinearConstraintSet s;
  int xi = s.add_continuous("x", 0, 1e4), vi = s.add_continuous("v", 0, 40);
  int et = s.add_binary("eta_t", VarClass::Eta), ep = s.add_binary("eta_p", VarClass::Eta);
  Affine act = Affine(1.0) - Affine::var(et) + Affine::var(ep);
  hdv_cutin_rows(s, "cut", Affine::var(xi), Affine::var(vi), 100.0, 20.0, act, hdv(), 1.0, 1000.0);
  REQUIRE(s.rows.size() == 2);
  // active: need x >= 100 + 5 + 2*20 = 145 and v >= 20
  std::vector<double> x{144, 20, 1, 0};
  CHECK(s.violation(s.rows[0], x) == Approx(1.0));
  x[0] = 145;
  CHECK(s.max_violation(x) == 0);
  x[1] = 19.9;
  CHECK(s.max_violation(x) > 0);
  // inactive for the other three patterns
  for (auto [a, b] : {std::pair{0, 0}, std::pair{1, 1}, std::pair{0, 1}}) {
    std::vector<double> y{0, 10, double(a), double(b)};
    CHECK(s.max_violation(y) == 0);
  }
}

TEST_CASE("CACC coefficients and prediction") {
  auto c = cacc_coefficients(1.0, 0.01, 1.6, 0.6);
  CHECK(c.B == Approx(0.8163).epsilon(1e-4));
  CHECK(c.C == Approx(0.005102).epsilon(1e-3));
  CHECK(c.A == Approx(0.354 / 1.96));
  CHECK(c.A == Approx(0.1806).epsilon(1e-3));
  double v = cacc_predict(20, 22.0, 25, c, lim());
  CHECK(v == Approx(c.A * 20 + c.B * 22 + c.C * 25));
  CHECK(v == Approx(21.70).epsilon(2e-3));
  CHECK(cacc_predict(20, std::nullopt, 25, c, lim()) == 20);
  // equilibrium spacing ratio
  CHECK((1 - c.A - c.B) / c.C == Approx(0.6).epsilon(0.02));
  double veq = 25, seq = (1 - c.A - c.B) * veq / c.C;
  CHECK(cacc_predict(veq, veq, seq, c, lim()) == Approx(veq));
  // contraction toward the leader speed with equilibrium spacing feedback
  double vh = 12, vstar = 25;
  double err = std::abs(vh - vstar);
  for (int i = 0; i < 30; ++i) {
    vh = cacc_predict(vh, vstar, 0.6 * vstar, c, lim());
    double e2 = std::abs(vh - vstar);
    CHECK(e2 <= err + 0.02);
    err = e2;
  }
  CHECK(err < 0.1);
  CHECK(std::abs(c.A) + std::abs(c.B) <= 1 + c.C * 0.6 + 1e-12);
  // clamp
  CHECK(cacc_predict(33, 33.0, 500, c, lim()) == Approx(33.33));
}

TEST_CASE("n-CAV cut-in threshold and rows") {
  CaccCoefficients lit{kReportedCaccA, 0.8163, 0.005102};
  CHECK(ncav_threshold(-6, 1, lit) == Approx(-10.33).epsilon(1e-3));
  CHECK(ncav_threshold(0, 1, lit) == 0.0);

  auto c = cacc_coefficients(1.0, 0.01, 1.6, 0.6);
  LinearConstraintSet s;
  int vi = s.add_continuous("v", 0, 40), vp = s.add_continuous("vp", 0, 40);
  int et = s.add_binary("et", VarClass::Eta), ep = s.add_binary("ep", VarClass::Eta);
  Affine act = Affine(1.0) - Affine::var(et) + Affine::var(ep);
  ncav_cutin_rows(s, "cut", Affine::var(vi), 25.0, Affine::var(vp), act, c, lim(), 1.0, 1000.0);
  const double k = (c.B - 0.5) / c.A;
  // prev speed 30: a~ = max(-6, -20) = -6 -> v >= 25 - 6k
  std::vector<double> x{25 - 6 * k + 1e-9, 30, 1, 0};
  CHECK(s.max_violation(x) <= 1e-9);
  x[0] -= 0.01;
  CHECK(s.max_violation(x) > 0);
  // prev speed 12: a~ = -2 -> v >= 25 - 2k
  std::vector<double> y{25 - 2 * k - 0.01, 12, 1, 0};
  CHECK(s.max_violation(y) > 0);
  y[0] += 0.02;
  CHECK(s.max_violation(y) <= 1e-9);
  for (auto [a, b] : {std::pair{0, 0}, std::pair{1, 1}, std::pair{0, 1}}) {
    std::vector<double> z{10, 33, double(a), double(b)};
    CHECK(s.max_violation(z) == 0);
  }
}
