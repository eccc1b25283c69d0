#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/flow_case.hpp"
#include "support/instances.hpp"
#include "synccav/harness.hpp"

using namespace synccav;
using namespace testsupport;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("synccav_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kFixture =
    "vehicle_id,frame,time,x,y,speed,lane\n"
    "7,1,0.0,100,1.8,20,1\n"
    "7,2,0.1,102,1.8,20,1\n"
    "3,1,0.0,160,5.4,22,2\n"
    "3,2,0.1,162.2,5.4,22,2\n"
    "9,1,0.0,140,1.8,18,1\n"
    "12,1,0.0,220,9.0,25,3\n"
    "15,1,0.0,90,5.4,21,2\n";

}  // namespace

TEST_CASE("platooned subjects on an empty road stay put") {
  ScenarioConfig c;
  c.desired_spacing = 90.0;
  const double v = c.limits.v_max;
  c.vehicles = {subject(1, 590, 1.8, v), subject(2, 500, 1.8, v)};
  harness::HarnessOptions o;
  o.step_budget = 10;
  auto tr = harness::run_closed_loop(c, o);
  auto m = harness::compute_metrics(tr);
  CHECK(m.synced);
  CHECK(m.sync_time_total == 0.0);
  CHECK(tr.termination == "synced");
  for (const auto& r : tr.steps)
    for (const auto& u : r.applied) {
      CHECK(std::abs(u.ux) < 1e-4);
      CHECK(std::abs(u.uy) < 1e-4);
    }
}

TEST_CASE("canonical catch-up completes with one phase switch") {
  auto c = harness::canonical_scenario();
  harness::HarnessOptions o;
  auto tr = harness::run_closed_loop(c, o);
  auto m = harness::compute_metrics(tr);
  CHECK(m.complete);
  CHECK(tr.termination == "synced");
  CHECK(m.phase_switches_to_q2 == 1);
  CHECK(m.gap_violations == 0);
  CHECK(m.infeasible_steps == 0);
  // regression snapshot
  CHECK(m.sync_time_catchup == Approx(3));
  CHECK(m.sync_time_total == Approx(26));
  CHECK(m.steps == 28);
}

TEST_CASE("phase update hysteresis") {
  int absent = 0;
  CHECK(harness::phase_update(Phase::CatchUp, false, absent, 2, true) == Phase::CatchUp);
  CHECK(harness::phase_update(Phase::CatchUp, true, absent, 2, true) == Phase::Platoon);
  CHECK(harness::phase_update(Phase::Platoon, false, absent, 2, true) == Phase::Platoon);
  CHECK(absent == 1);
  CHECK(harness::phase_update(Phase::Platoon, true, absent, 2, true) == Phase::Platoon);
  CHECK(absent == 0);
  harness::phase_update(Phase::Platoon, false, absent, 2, true);
  CHECK(harness::phase_update(Phase::Platoon, false, absent, 2, true) == Phase::CatchUp);
  absent = 0;
  for (int k = 0; k < 5; ++k) CHECK(harness::phase_update(Phase::Platoon, false, absent, 2, false) == Phase::Platoon);
}

TEST_CASE("congestion ratio") {
  const double kj = 0.15;
  CHECK(harness::congestion_ratio(kj / 2, kj) == 1.0);
  CHECK(harness::congestion_ratio(0.0, kj) == 0.0);
  CHECK(harness::congestion_ratio(kj / 4, kj) == Approx(0.75));
  CHECK(harness::congestion_ratio(kj, kj) == Approx(0.0).scale(1));
  CHECK_THROWS(harness::congestion_ratio(-0.01, kj));
  CHECK_THROWS(harness::congestion_ratio(kj * 1.01, kj));
}

TEST_CASE("trajectory ingestion") {
  harness::IngestOptions opt;
  auto recs = harness::parse_trajectories(kFixture, opt);
  CHECK(recs.size() == 7);
  auto c = harness::scenario_from_records(recs, opt);
  REQUIRE(c.vehicles.size() == 5);
  CHECK(c.geometry.count() == 3);
  int subjects = 0;
  double min_x = 1e9;
  for (const auto& v : c.vehicles) {
    subjects += v.cls == VehicleClass::SubjectCav;
    min_x = std::min(min_x, v.state.x);
    if (v.id == 12) CHECK(v.state.y == Approx(c.geometry.center(2)));
    if (v.id == 3 || v.id == 7) CHECK(v.cls == VehicleClass::SubjectCav);
  }
  CHECK(subjects == 2);
  CHECK(min_x == Approx(100));

  opt.feet = true;
  auto ft = harness::parse_trajectories(kFixture, opt);
  CHECK(ft[0].x == Approx(30.48));
  CHECK(ft[0].speed == Approx(6.096));
}

TEST_CASE("ingestion errors are itemized") {
  harness::IngestOptions opt;
  try {
    harness::parse_trajectories("vehicle_id,frame,x\n1,1,3\n", opt);
    FAIL("expected an error");
  } catch (const harness::IngestError& e) {
    CHECK(e.items.size() == 4);  // time, y, speed, lane
  }
  std::string gap = std::string(kFixture) + "9,4,0.3,150,1.8,18,1\n";
  try {
    harness::parse_trajectories(gap, opt);
    FAIL("expected an error");
  } catch (const harness::IngestError& e) {
    REQUIRE(e.items.size() == 1);
    CHECK(e.items[0].find("vehicle 9") != std::string::npos);
  }
  std::string dup = std::string(kFixture) + "7,2,0.2,103,1.8,20,1\n";
  CHECK_THROWS_AS(harness::parse_trajectories(dup, opt), harness::IngestError);
  CHECK_THROWS_AS(harness::parse_trajectories("vehicle_id,frame,time,x,y,speed,lane\n1,1,0,x,1,1,1\n", opt),
                  harness::IngestError);
  CHECK_THROWS(harness::load_trajectories("/nonexistent/tracks.csv", opt));
}

TEST_CASE("export writes every artifact") {
  auto c = harness::canonical_scenario();
  harness::HarnessOptions o;
  o.step_budget = 4;
  auto tr = harness::run_closed_loop(c, o);
  auto m = harness::compute_metrics(tr);
  auto dir = scratch("export");
  harness::export_results(tr, m, dir.string());
  for (const char* f : {"trajectory.csv", "flow.csv", "metrics.json", "plot.dat", "losses.csv"})
    CHECK(fs::exists(dir / f));
  int rows = 0;
  for (const auto& r : tr.steps) rows += static_cast<int>(r.vehicles.size());
  rows += static_cast<int>(tr.final_vehicles.size());
  CHECK(lines(slurp(dir / "trajectory.csv")) == rows + 1);
  CHECK(lines(slurp(dir / "losses.csv")) == static_cast<int>(tr.steps.size()) + 1);

  harness::SimTrace empty;
  empty.truncated = true;
  auto e = scratch("empty");
  harness::export_results(empty, harness::compute_metrics(empty), e.string());
  CHECK(lines(slurp(e / "trajectory.csv")) == 1);
  CHECK(lines(slurp(e / "losses.csv")) == 1);

  std::ofstream(dir / "blocker") << "x";
  CHECK_THROWS(harness::export_results(tr, m, (dir / "blocker" / "sub").string()));
  fs::remove_all(dir);
  fs::remove_all(e);
}

TEST_CASE("repeated runs are identical") {
  auto c = harness::family_scenario({0.5, 0.3, 4});
  harness::HarnessOptions o;
  o.step_budget = 15;
  auto a = harness::run_closed_loop(c, o);
  auto b = harness::run_closed_loop(c, o);
  auto ma = harness::compute_metrics(a), mb = harness::compute_metrics(b);
  CHECK(harness::trajectory_csv(a) == harness::trajectory_csv(b));
  CHECK(harness::metrics_json(ma, a) == harness::metrics_json(mb, b));
  CHECK(harness::loss_log_csv(a) == harness::loss_log_csv(b));
}

TEST_CASE("coupled flow conserves vehicles") {
  auto fc = run_flow_case();
  MESSAGE("handoffs " << fc.handoffs << " exits " << fc.exits);
  CHECK(fc.handoffs > 0);
  CHECK(fc.exits > 0);
  CHECK(fc.account.relative_error() <= 1e-9);
}

TEST_CASE("closed-loop run keeps its books") {
  auto c = harness::canonical_scenario();
  harness::HarnessOptions o;
  o.step_budget = 40;
  o.stop_when_synced = false;
  auto tr = harness::run_closed_loop(c, o);
  CHECK(tr.account.relative_error() <= 1e-9);
  CHECK(tr.flow.size() == tr.steps.size() + 1);
}

TEST_CASE("predictor-corrector settles with an HDV behind") {
  ScenarioConfig c;
  c.vehicles = {subject(1, 300, 1.8, 20), subject(2, 220, 5.4, 20), hdv(3, 250, 1.8, 20)};
  auto w = world::make_world(c);
  auto wc = weights_for(c, Phase::CatchUp);
  mpc::MpcOptions opt;
  auto r = mpc::predictor_corrector_iterate(c, w, nullptr, Phase::CatchUp, 1, wc, opt);
  CHECK(r.last.ok());
  CHECK(r.converged);
  CHECK(r.iterations <= 3);
}

TEST_CASE("applied control is the first move of the step plan") {
  auto c = harness::canonical_scenario();
  harness::HarnessOptions o;
  o.step_budget = 3;
  auto tr = harness::run_closed_loop(c, o);
  REQUIRE(tr.steps.size() == 3);
  for (std::size_t s = 0; s + 1 < tr.steps.size(); ++s) {
    const auto& r = tr.steps[s];
    const auto& nx = tr.steps[s + 1].vehicles;
    for (int i = 0; i < 2; ++i) {
      const auto& before = r.vehicles[i].state;
      auto it = std::find_if(nx.begin(), nx.end(), [&](const Vehicle& v) { return v.id == r.vehicles[i].id; });
      REQUIRE(it != nx.end());
      CHECK(it->state.vx == Approx(before.vx + r.applied[i].ux * c.dt).epsilon(1e-9));
      CHECK(it->state.vy == Approx(before.vy + r.applied[i].uy * c.dt).epsilon(1e-9));
    }
  }
}

TEST_CASE("platoon entry waits until its problem is solvable") {
  // a lane change finishes right in front of a CACC car; the same-lane platoon problem is infeasible on that step
  auto c = harness::random_scenario(20);
  harness::HarnessOptions o;
  o.step_budget = 50;
  o.stop_when_synced = false;
  auto tr = harness::run_closed_loop(c, o);
  int deferred = 0;
  for (const auto& r : tr.steps) deferred += r.deferred_switch;
  CHECK_FALSE(tr.truncated);
  CHECK(deferred >= 1);
}

TEST_CASE("strict guard halts on a violated condition") {
  ScenarioConfig c;
  c.vehicles = {subject(1, 400, 1.8, 25), subject(2, 300, 5.4, 25), hdv(3, 340, 1.8, 25, 9.0)};
  harness::HarnessOptions o;
  o.step_budget = 5;
  auto monitor = harness::run_closed_loop(c, o);
  CHECK_FALSE(monitor.steps.front().feasibility.overall);
  CHECK_FALSE(monitor.truncated);
  o.strict_guard = true;
  auto strict = harness::run_closed_loop(c, o);
  CHECK(strict.truncated);
  CHECK(strict.termination == "guard");
  CHECK(strict.steps.size() == 1);
}
