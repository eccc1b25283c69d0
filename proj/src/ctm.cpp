#include "synccav/ctm.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace synccav::ctm {

double coupled_density(double f, double tracked, double dt, double cell_length) {
  return (f * dt / 3600.0 + tracked) / cell_length;
}

CellLane make_lane(int cells, const CtmParams& p, double cell_length, double initial_flow, double inflow, double dt) {
  if (cells < 1) throw std::invalid_argument("lane needs at least one cell");
  CellLane lane;
  lane.params = p;
  lane.cell_length = cell_length;
  lane.f.assign(cells, initial_flow);
  lane.tracked.assign(cells, 0.0);
  lane.inflow = inflow;
  refresh(lane, dt);
  return lane;
}

void refresh(CellLane& lane, double dt) {
  const int n = lane.cells();
  const auto& p = lane.params;
  lane.k.resize(n);
  lane.s.resize(n);
  lane.r.resize(n);
  lane.y.resize(n);
  for (int c = 0; c < n; ++c) {
    lane.k[c] = coupled_density(lane.f[c], lane.tracked[c], dt, lane.cell_length);
    lane.s[c] = std::min(lane.f[c], p.q_max);
    lane.r[c] = std::clamp(3600.0 * p.wave_speed * (p.k_jam - lane.k[c]), 0.0, p.q_max);
  }
  for (int c = 0; c < n; ++c) lane.y[c] = std::min(c == 0 ? lane.inflow : lane.s[c - 1], lane.r[c]);
  lane.outflow = lane.s[n - 1];  // free downstream boundary
}

CellLane ctm_step(const CellLane& lane, const std::vector<double>& tracked_next, double dt) {
  const int n = lane.cells();
  if (static_cast<int>(tracked_next.size()) != n) throw std::invalid_argument("tracked count size mismatch");
  CellLane out = lane;
  for (int c = 0; c < n; ++c) {
    const double leave = c + 1 < n ? lane.y[c + 1] : lane.outflow;
    out.f[c] = lane.f[c] + lane.y[c] - leave;
    if (out.f[c] < -1e-9) throw std::runtime_error("negative cell flow in lane update");
    out.f[c] = std::max(0.0, out.f[c]);
  }
  out.tracked = tracked_next;
  refresh(out, dt);
  return out;
}

double vehicle_count(const CellLane& lane, double dt) {
  double n = 0.0;
  for (int c = 0; c < lane.cells(); ++c) n += lane.f[c] * dt / 3600.0 + lane.tracked[c];
  return n;
}

double cell_speed(const CellLane& lane, int c, double v_max) {
  if (lane.k[c] <= 0.0) return v_max;
  const double out = c + 1 < lane.cells() ? lane.y[c + 1] : lane.outflow;
  return std::min(v_max, out / 3600.0 / lane.k[c]);
}

std::vector<FlowRow> upstream_impact_trace(const std::vector<std::vector<CellLane>>& history) {
  std::vector<FlowRow> rows;
  for (std::size_t t = 0; t < history.size(); ++t)
    for (std::size_t l = 0; l < history[t].size(); ++l) {
      const auto& ln = history[t][l];
      for (int c = 0; c < ln.cells(); ++c)
        rows.push_back({static_cast<int>(t), static_cast<int>(l), c, ln.f[c], ln.y[c], ln.k[c], ln.tracked[c]});
    }
  return rows;
}

std::string flow_csv(const std::vector<FlowRow>& rows) {
  std::string out = "step,lane,cell,f,y,k,tracked_count\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.6f,%.6f,%.8f,%.0f\n", r.step, r.lane + 1, r.cell + 1, r.f, r.y, r.k,
                  r.tracked);
    out += buf;
  }
  return out;
}

}  // namespace synccav::ctm
