#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "synccav/relations.hpp"
#include "synccav/scenario.hpp"

using namespace synccav;
using namespace synccav::scenario;

namespace {

ScenarioConfig base() {
  ScenarioConfig c;
  c.vehicles.push_back({1, VehicleClass::SubjectCav, {110, 1.8, 20, 0}, {}});
  c.vehicles.push_back({2, VehicleClass::SubjectCav, {50, 9.0, 20, 0}, {}});
  return c;
}

bool has_message(const ValidationError& e, const std::string& needle) {
  for (const auto& m : e.messages)
    if (m.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("default parameters validate") {
  auto c = base();
  auto v = validate_scenario(c);
  CHECK(v.config().dt == 1.0);
  CHECK(v.config().horizon == 5);
  CHECK(v.config().limits.v_max == 33.33);
  CHECK(v.config().limits.a_min == -6);
  CHECK(v.config().ctm.k_jam == 0.12);
  CHECK(v.config().ctm.q_max == 2000);
  CHECK(v.config().weights.xi_max == 10);
  CHECK(v.big_m() == v.config().road_length);
  CHECK(v.config().vehicles[v.subject(0)].id == 1);
}

TEST_CASE("CFL violation is reported") {
  auto c = base();
  c.cell_length = 30;
  try {
    validate_scenario(c);
    FAIL("expected error");
  } catch (const ValidationError& e) {
    CHECK(has_message(e, "CFL violated"));
  }
}

TEST_CASE("initial gap violation is reported") {
  auto c = base();
  c.vehicles.push_back({3, VehicleClass::Hdv, {200, 5.4, 20, 0}, {}});
  c.vehicles.push_back({4, VehicleClass::Hdv, {202, 5.4, 20, 0}, {}});
  try {
    validate_scenario(c);
    FAIL("expected error");
  } catch (const ValidationError& e) {
    CHECK(has_message(e, "initial safety gap violated between vehicles 3 and 4"));
  }
  // a subject follower needs the braking bound, not just the length
  auto d = base();
  d.vehicles.push_back({5, VehicleClass::Hdv, {130, 1.8, 20, 0}, {}});
  CHECK_THROWS_AS(validate_scenario(d), ValidationError);
}

TEST_CASE("every violated invariant is listed") {
  auto c = base();
  c.vehicles[0].state.vx = 50;
  c.vehicles.push_back({7, VehicleClass::Hdv, {10, 20.0, 20, 0}, {}});
  c.vehicles.push_back({8, VehicleClass::NeighborCav, {400, 1.8, 20, 0}, {}});
  c.vehicles.push_back({9, VehicleClass::Hdv, {600, 1.8, 20, 0}, {}});
  c.vehicles.back().params.reaction_time = 0.2;
  try {
    validate_scenario(c);
    FAIL("expected error");
  } catch (const ValidationError& e) {
    CHECK(has_message(e, "vehicle 1: speed"));
    CHECK(has_message(e, "vehicle 7: y outside"));
    CHECK(has_message(e, "vehicle 8: n-CAV requires"));
    CHECK(has_message(e, "vehicle 9: reaction time rounds to zero"));
  }
  auto d = base();
  d.vehicles.pop_back();
  CHECK_THROWS_AS(validate_scenario(d), ValidationError);
}

TEST_CASE("reaction times are rounded to whole steps") {
  auto c = base();
  c.vehicles.push_back({3, VehicleClass::Hdv, {300, 5.4, 20, 0}, {}});
  c.vehicles.back().params.reaction_time = 2.3;
  auto v = validate_scenario(c);
  CHECK(v.config().vehicles[2].params.reaction_time == 2.0);
  CHECK(v.reaction_steps(2) == 2);
}

TEST_CASE("validation is idempotent") {
  auto c = base();
  c.vehicles.push_back({3, VehicleClass::Hdv, {300, 5.4, 20, 0}, {}});
  c.vehicles.back().params.reaction_time = 1.7;
  auto v1 = validate_scenario(c);
  auto v2 = validate_scenario(v1.config());
  CHECK(scenario_to_json(v1.config()) == scenario_to_json(v2.config()));
}

TEST_CASE("initial phase") {
  auto c = base();
  CHECK(initial_phase(validate_scenario(c)) == Phase::CatchUp);
  auto q2 = base();
  q2.vehicles[0].state = {110, 1.8, 15, 0};
  q2.vehicles[1].state = {80, 1.8, 10, 0};
  CHECK(initial_phase(validate_scenario(q2)) == Phase::Platoon);
  auto mid = base();
  mid.vehicles[0].state = {200, 1.8, 10, 0};
  mid.vehicles[1].state = {100, 1.8, 10, 0};
  mid.vehicles.push_back({3, VehicleClass::Hdv, {150, 1.8, 10, 0}, {}});
  CHECK(initial_phase(validate_scenario(mid)) == Phase::CatchUp);
}

TEST_CASE("phase agrees with the following indicators on random scenarios") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> X(0, 400);
  std::uniform_int_distribution<int> L(0, 2);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    auto c = base();
    c.vehicles.clear();
    for (int j = 0; j < 4; ++j)
      c.vehicles.push_back({j + 1, j < 2 ? VehicleClass::SubjectCav : VehicleClass::Hdv,
                            {X(rng), 1.8 + 3.6 * L(rng), 10, 0}, {}});
    try {
      auto v = validate_scenario(c);
      std::vector<Kinematics2D> s;
      for (const auto& veh : v.config().vehicles) s.push_back(veh.state);
      auto snap = relations::eval_snapshot(s, v.config().geometry, relations::CellGrid{40, 150});
      bool follows = false;
      for (int l = 0; l < 3; ++l) follows = follows || snap.eta_at(0, 1, l) || snap.eta_at(1, 0, l);
      CHECK((initial_phase(v) == Phase::Platoon) == follows);
      for (const auto& veh : v.config().vehicles)
        CHECK_NOTHROW(relations::eval_lane_membership(veh.state.y, v.config().geometry));
      ++checked;
    } catch (const ValidationError&) {
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("JSON round trip") {
  auto c = base();
  c.vehicles.push_back({3, VehicleClass::NeighborCav, {300, 5.4, 20, 0}, {}});
  c.vehicles.back().params.cacc_k1 = 0.01;
  c.vehicles.back().params.cacc_k2 = 1.6;
  c.vehicles.back().params.cacc_time_gap = 0.6;
  auto text = scenario_to_json(c);
  auto back = parse_scenario_json(text);
  CHECK(scenario_to_json(back) == text);
  CHECK(back.vehicles[2].cls == VehicleClass::NeighborCav);
  auto small = parse_scenario_json(
      R"({"lanes":{"count":2,"width":3.5},"vehicles":[{"id":1,"class":"subject","x":10,"y":1,"vx":12},)"
      R"({"id":2,"class":"hdv","x":90,"y":1,"vx":12}]})");
  CHECK(small.geometry.count() == 2);
  CHECK(small.vehicles[1].params.reaction_time == 2.0);
  CHECK_THROWS(parse_scenario_json("{"));
}
