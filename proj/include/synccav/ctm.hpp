#pragma once

#include <string>
#include <vector>

#include "synccav/types.hpp"

namespace synccav::ctm {

// Per-lane CTM state. Flows in veh/h, densities in veh/m.
// s, r, k and y describe the transfer out of the current state (they are refreshed after every step).
struct CellLane {
  CtmParams params;
  double cell_length = 40.0;
  std::vector<double> f;        // cell flow
  std::vector<double> y;        // entering flow of each cell
  std::vector<double> s;        // sending
  std::vector<double> r;        // receiving
  std::vector<double> k;        // coupled density
  std::vector<double> tracked;  // tracked vehicles per cell
  double inflow = 0.0;          // boundary demand (veh/h)
  double outflow = 0.0;         // flow leaving the last cell on the next step (veh/h)

  int cells() const { return static_cast<int>(f.size()); }
};

// (f*dt/3600 + tracked)/dL
double coupled_density(double f, double tracked, double dt, double cell_length);

CellLane make_lane(int cells, const CtmParams& p, double cell_length, double initial_flow, double inflow, double dt);

// Recomputes k, s, r, y and outflow from f and tracked.
void refresh(CellLane& lane, double dt);

// One synchronous update: y from the current state, f' = f + y_c - y_{c+1}; tracked counts are then replaced
// by `tracked_next` (end-of-step positions) and the derived fields refreshed. Throws on a negative flow.
CellLane ctm_step(const CellLane& lane, const std::vector<double>& tracked_next, double dt);

// Flow-equivalent vehicles plus tracked vehicles.
double vehicle_count(const CellLane& lane, double dt);

// Mean speed of a cell from the realized outflow over density; v_max when empty.
double cell_speed(const CellLane& lane, int c, double v_max);

struct FlowRow {
  int step, lane, cell;
  double f, y, k, tracked;
};

// Per-cell time series; history[t][l] is the lane state at step t.
std::vector<FlowRow> upstream_impact_trace(const std::vector<std::vector<CellLane>>& history);

std::string flow_csv(const std::vector<FlowRow>& rows);

}  // namespace synccav::ctm
