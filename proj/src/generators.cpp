#include <algorithm>
#include <cmath>
#include <random>

#include "synccav/harness.hpp"
#include "synccav/micro.hpp"
#include "synccav/relations.hpp"

namespace synccav::harness {

namespace {

Vehicle make(int id, VehicleClass cls, double x, double y, double vx) {
  Vehicle v;
  v.id = id;
  v.cls = cls;
  v.state = {x, y, vx, 0.0};
  if (cls == VehicleClass::Hdv) v.params.reaction_time = 2.0;
  if (cls == VehicleClass::NeighborCav) {
    v.params.cacc_k1 = 0.01;
    v.params.cacc_k2 = 1.6;
    v.params.cacc_time_gap = 0.6;
  }
  return v;
}

// Free-flow Greenshield density for a volume-to-capacity ratio.
double density_for(double vc, double k_jam) { return 0.5 * k_jam * (1.0 - std::sqrt(std::max(0.0, 1.0 - vc))); }

// Drops neighbors that would start inside a required gap.
void enforce_gaps(ScenarioConfig& c) {
  const auto& geo = c.geometry;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t a = 0; a < c.vehicles.size() && !changed; ++a)
      for (std::size_t b = 0; b < c.vehicles.size() && !changed; ++b) {
        if (a == b) continue;
        const auto& F = c.vehicles[a];
        const auto& Ld = c.vehicles[b];
        if (relations::eval_lane_membership(F.state.y, geo) != relations::eval_lane_membership(Ld.state.y, geo))
          continue;
        double gap = Ld.state.x - F.state.x;
        if (gap < 0) continue;
        double need = F.cls == VehicleClass::SubjectCav ? micro::safety_gap(F.state.vx, F.params, c.limits) + 1.0
                                                        : Ld.params.length + 10.0;
        if (Ld.cls == VehicleClass::SubjectCav && F.cls != VehicleClass::SubjectCav) need = Ld.params.length + 15.0;
        if (gap >= need) continue;
        std::size_t drop = F.cls == VehicleClass::SubjectCav ? b : a;
        if (c.vehicles[drop].cls == VehicleClass::SubjectCav) continue;
        c.vehicles.erase(c.vehicles.begin() + static_cast<long>(drop));
        changed = true;
      }
  }
}

// Safety gap at the prevailing speed, rounded up to 5 m.
double spacing_for(double v, const ScenarioConfig& c) {
  return 5.0 * std::ceil(micro::safety_gap(v, VehicleParams{}, c.limits) / 5.0);
}

}  // namespace

ScenarioConfig canonical_scenario() {
  ScenarioConfig c;
  c.initial_flow.assign(c.geometry.count(), 1000.0);
  c.inflow = 1000.0;
  const double y[3] = {c.geometry.center(0), c.geometry.center(1), c.geometry.center(2)};
  c.vehicles = {
      make(1, VehicleClass::SubjectCav, 560.0, y[1], 15.0),
      make(2, VehicleClass::SubjectCav, 500.0, y[0], 15.0),
      make(3, VehicleClass::Hdv, 600.0, y[0], 15.0),
      make(4, VehicleClass::Hdv, 470.0, y[1], 15.0),
  };
  // slow traffic ahead in every lane caps the achievable speed near 15 m/s
  for (int l = 0; l < 3; ++l) c.vehicles.push_back(make(5 + l, VehicleClass::NeighborCav, 660.0, y[l], 15.0));
  c.desired_spacing = spacing_for(15.0, c);
  return c;
}

ScenarioConfig family_scenario(const FamilyParams& p) {
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ScenarioConfig c;
  const int NL = c.geometry.count();
  c.initial_flow.assign(NL, p.vc * c.ctm.q_max);
  c.inflow = p.vc * c.ctm.q_max;
  const double k = density_for(p.vc, c.ctm.k_jam);
  const double v_eq = std::clamp(c.limits.v_max * (1.0 - k / c.ctm.k_jam), c.limits.v_min, c.limits.v_max);
  c.desired_spacing = spacing_for(v_eq, c);
  int lane_a = static_cast<int>(U(rng) * NL) % NL;
  int lane_b = lane_a == 0 ? 1 : (lane_a == NL - 1 ? NL - 2 : lane_a + (U(rng) < 0.5 ? -1 : 1));
  double xb = 500.0, xa = xb + 40.0 + 40.0 * U(rng);
  auto speed = [&] { return std::clamp(v_eq + (U(rng) - 0.5) * 3.0, c.limits.v_min, c.limits.v_max); };
  c.vehicles.push_back(make(1, VehicleClass::SubjectCav, xa, c.geometry.center(lane_a), speed()));
  c.vehicles.push_back(make(2, VehicleClass::SubjectCav, xb, c.geometry.center(lane_b), speed()));
  int id = 3;
  const double spacing = 1.0 / k;
  for (int l = 0; l < NL; ++l) {
    for (double x = 300.0 + spacing * U(rng); x < 900.0; x += spacing * (0.7 + 0.6 * U(rng))) {
      auto cls = U(rng) < p.cav_share ? VehicleClass::NeighborCav : VehicleClass::Hdv;
      c.vehicles.push_back(make(id++, cls, x, c.geometry.center(l), speed()));
    }
  }
  enforce_gaps(c);
  return c;
}

ScenarioConfig random_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  FamilyParams p;
  p.vc = 0.2 + 0.6 * U(rng);
  p.cav_share = U(rng);
  p.seed = seed;
  auto c = family_scenario(p);
  // vary the subject layout as well
  if (U(rng) < 0.3) c.vehicles[0].state.y = c.vehicles[1].state.y;
  auto& a = c.vehicles[0];
  const auto& b = c.vehicles[1];
  a.state.x = b.state.x + 30.0 + 120.0 * U(rng);
  if (a.state.y == b.state.y)
    a.state.x = std::max(a.state.x, b.state.x + micro::safety_gap(b.state.vx, b.params, c.limits) + 1.0);
  enforce_gaps(c);
  return c;
}

}  // namespace synccav::harness
