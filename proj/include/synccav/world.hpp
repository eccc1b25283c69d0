#pragma once

#include <array>
#include <vector>

#include "synccav/types.hpp"

namespace synccav::world {

// Microscopic state of the vehicles currently tracked individually.
// Subject CAVs follow their applied controls; neighbors follow Newell (HDV) or CACC (n-CAV).
struct World {
  LaneGeometry geometry;
  LimitSet limits;
  double dt = 1.0;
  double cacc_range = 150.0;  // an n-CAV without a leader inside this range holds its speed
  std::vector<Vehicle> vehicles;
  // x_hist[j][m] is the position of vehicle j at step - m (m = 0 is the current position).
  std::vector<std::vector<double>> x_hist;
  std::array<int, 2> subj{-1, -1};
  int step = 0;

  int lane_of(int j) const;
  int index_of(int id) const;  // -1 if absent
};

// History is seeded by constant-speed back-extrapolation so that lagged leader positions exist from step 0.
World make_world(const ScenarioConfig& cfg, int history = 8);

// Nearest vehicle downstream of j in j's current lane (any class), -1 if none.
int leader_of(const World& w, int j);

struct AdvanceStats {
  int safeguard_clamps = 0;
};

// One plant step. Subjects jump to the given states; neighbors are updated downstream-first within each lane and
// never end closer than their length behind the updated position of their leader.
World advance(const World& w, const std::array<Kinematics2D, 2>& subject_next, AdvanceStats* stats = nullptr);

// Predicted neighbor trajectories for subject reference trajectories ref[i][t], t = 0..T (ref[i][0] = current).
// Returns the world at steps 0..T.
std::vector<World> rollout(const World& w, const std::array<std::vector<Kinematics2D>, 2>& ref);

// Removes neighbors farther than `range` from both subjects or past `road_end`; returns the removed vehicles.
std::vector<Vehicle> prune(World& w, double range, double road_end);

}  // namespace synccav::world
