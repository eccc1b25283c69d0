#include "synccav/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "synccav/micro.hpp"
#include "synccav/relations.hpp"

namespace synccav::world {

int World::lane_of(int j) const { return relations::eval_lane_membership(vehicles[j].state.y, geometry); }

int World::index_of(int id) const {
  for (std::size_t j = 0; j < vehicles.size(); ++j)
    if (vehicles[j].id == id) return static_cast<int>(j);
  return -1;
}

World make_world(const ScenarioConfig& cfg, int history) {
  World w;
  w.geometry = cfg.geometry;
  w.limits = cfg.limits;
  w.dt = cfg.dt;
  w.cacc_range = cfg.monitoring_range;
  w.vehicles = cfg.vehicles;
  int k = 0;
  for (std::size_t j = 0; j < w.vehicles.size(); ++j) {
    const auto& v = w.vehicles[j];
    history = std::max(history, static_cast<int>(std::lround(v.params.reaction_time / cfg.dt)) + 1);
    if (v.cls == VehicleClass::SubjectCav) {
      if (k < 2) w.subj[k++] = static_cast<int>(j);
    }
  }
  if (k == 2 && w.vehicles[w.subj[0]].id > w.vehicles[w.subj[1]].id) std::swap(w.subj[0], w.subj[1]);
  for (const auto& v : w.vehicles) {
    std::vector<double> h(history);
    for (int m = 0; m < history; ++m) h[m] = v.state.x - m * cfg.dt * v.state.vx;
    w.x_hist.push_back(std::move(h));
  }
  return w;
}

int leader_of(const World& w, int j) {
  int lane = w.lane_of(j);
  double xj = w.vehicles[j].state.x;
  int best = -1;
  for (std::size_t k = 0; k < w.vehicles.size(); ++k) {
    if (static_cast<int>(k) == j) continue;
    double xk = w.vehicles[k].state.x;
    if (xk <= xj || w.lane_of(static_cast<int>(k)) != lane) continue;
    if (best < 0 || xk < w.vehicles[best].state.x) best = static_cast<int>(k);
  }
  return best;
}

World advance(const World& w, const std::array<Kinematics2D, 2>& subject_next, AdvanceStats* stats) {
  World n = w;
  n.step = w.step + 1;
  const int N = static_cast<int>(w.vehicles.size());
  std::vector<char> done(N, 0);
  for (int i = 0; i < 2; ++i) {
    n.vehicles[w.subj[i]].state = subject_next[i];
    done[w.subj[i]] = 1;
  }
  std::vector<int> leader(N), order(N);
  for (int j = 0; j < N; ++j) leader[j] = leader_of(w, j);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return w.vehicles[a].state.x > w.vehicles[b].state.x; });
  for (int j : order) {
    if (done[j]) continue;
    const Vehicle& v = w.vehicles[j];
    const int ld = leader[j];
    double x1 = v.state.x, v1 = v.state.vx;
    if (v.cls == VehicleClass::Hdv) {
      int k = std::max(1, static_cast<int>(std::lround(v.params.reaction_time / w.dt)));
      std::optional<double> lag;
      if (ld >= 0) lag = w.x_hist[ld][k - 1];
      auto s = micro::newell_advance(v.state.x, lag, v.params, w.dt, w.limits);
      x1 = s.x;
      v1 = s.v;
    } else {
      auto c = micro::cacc_coefficients(v.params, w.dt);
      std::optional<double> vl;
      double gap = 0.0;
      if (ld >= 0 && w.vehicles[ld].state.x - v.state.x <= w.cacc_range) {
        vl = w.vehicles[ld].state.vx;
        gap = w.vehicles[ld].state.x - v.state.x;
      }
      v1 = micro::cacc_predict(v.state.vx, vl, gap, c, w.limits);
      x1 = v.state.x + w.dt * v1;
    }
    if (ld >= 0) {
      double cap = n.vehicles[ld].state.x - v.params.length;
      if (x1 > cap) {
        x1 = std::max(v.state.x, cap);
        v1 = (x1 - v.state.x) / w.dt;
        if (stats) stats->safeguard_clamps++;
      }
    }
    n.vehicles[j].state = {x1, v.state.y, v1, 0.0};
    done[j] = 1;
  }
  for (int j = 0; j < N; ++j) {
    auto& h = n.x_hist[j];
    std::rotate(h.rbegin(), h.rbegin() + 1, h.rend());
    h[0] = n.vehicles[j].state.x;
  }
  return n;
}

std::vector<World> rollout(const World& w, const std::array<std::vector<Kinematics2D>, 2>& ref) {
  std::vector<World> out{w};
  const int T = static_cast<int>(ref[0].size()) - 1;
  for (int t = 1; t <= T; ++t) out.push_back(advance(out.back(), {ref[0][t], ref[1][t]}));
  return out;
}

std::vector<Vehicle> prune(World& w, double range, double road_end) {
  std::vector<Vehicle> removed;
  const double xa = w.vehicles[w.subj[0]].state.x, xb = w.vehicles[w.subj[1]].state.x;
  int ida = w.vehicles[w.subj[0]].id, idb = w.vehicles[w.subj[1]].id;
  World keep = w;
  keep.vehicles.clear();
  keep.x_hist.clear();
  for (std::size_t j = 0; j < w.vehicles.size(); ++j) {
    const auto& v = w.vehicles[j];
    bool subject = v.id == ida || v.id == idb;
    bool far = std::abs(v.state.x - xa) > range && std::abs(v.state.x - xb) > range;
    if (!subject && (far || v.state.x > road_end)) {
      removed.push_back(v);
      continue;
    }
    keep.vehicles.push_back(v);
    keep.x_hist.push_back(w.x_hist[j]);
  }
  keep.subj = {keep.index_of(ida), keep.index_of(idb)};
  w = std::move(keep);
  return removed;
}

}  // namespace synccav::world
