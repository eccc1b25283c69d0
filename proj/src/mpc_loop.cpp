#include <algorithm>
#include <cmath>

#include "synccav/micro.hpp"
#include "synccav/mpc.hpp"
#include "synccav/relations.hpp"

namespace synccav::mpc {

namespace {

double entering(const ctm::CellLane& lane, int c, double dt, double extra) {
  const auto& P = lane.params;
  double k = ctm::coupled_density(lane.f[c], lane.tracked[c] + extra, dt, lane.cell_length);
  double r = std::clamp(3600.0 * P.wave_speed * (P.k_jam - k), 0.0, P.q_max);
  double s = c == 0 ? lane.inflow : lane.s[c - 1];
  return std::min(s, r);
}

std::vector<double> flow_penalty(const std::vector<ctm::CellLane>& lanes, const std::vector<world::World>& worlds,
                                 const std::array<std::vector<Kinematics2D>, 2>& ref, double dt, int T) {
  const int NL = static_cast<int>(lanes.size());
  std::vector<double> out(2 * T * NL, 0.0);
  std::vector<ctm::CellLane> cur = lanes;
  for (int t = 1; t <= T; ++t) {
    const auto& w = worlds[t];
    for (int l = 0; l < NL; ++l) {
      relations::CellGrid grid{cur[l].cell_length, cur[l].cells()};
      std::vector<double> tracked(cur[l].cells(), 0.0);
      for (std::size_t j = 0; j < w.vehicles.size(); ++j) {
        if (static_cast<int>(j) == w.subj[0] || static_cast<int>(j) == w.subj[1]) continue;
        double x = w.vehicles[j].state.x;
        if (w.lane_of(static_cast<int>(j)) != l || x < 0 || x > grid.extent()) continue;
        tracked[relations::eval_cell(x, grid)] += 1.0;
      }
      cur[l] = ctm::ctm_step(cur[l], tracked, dt);
      const double q2 = cur[l].params.q_max * cur[l].params.q_max;
      for (int i = 0; i < 2; ++i) {
        double x = ref[i][t].x;
        if (x < 0 || x > grid.extent()) continue;
        int c = relations::eval_cell(x, grid);
        double y0 = entering(cur[l], c, dt, 0.0), y1 = entering(cur[l], c, dt, 1.0);
        out[(i * T + t - 1) * NL + l] = (y0 * y0 - y1 * y1) / q2;
      }
    }
  }
  return out;
}

std::array<std::vector<Kinematics2D>, 2> reference(const Snapshot& s, const Plan* plan) {
  Plan u;
  for (int i = 0; i < 2; ++i) {
    u[i].assign(s.horizon, ControlInput2D{});
    if (plan)
      for (int k = 0; k < s.horizon && k < static_cast<int>((*plan)[i].size()); ++k) u[i][k] = (*plan)[i][k];
  }
  return trajectory(s, u);
}

bool same_predictions(const Snapshot& a, const Snapshot& b) {
  if (a.neighbors.size() != b.neighbors.size() || a.flow_penalty != b.flow_penalty) return false;
  for (std::size_t k = 0; k < a.neighbors.size(); ++k)
    if (a.neighbors[k].x != b.neighbors[k].x || a.neighbors[k].v != b.neighbors[k].v) return false;
  return true;
}

Plan shifted(const Plan& p, int T) {
  Plan out;
  for (int i = 0; i < 2; ++i) {
    for (int k = 1; k < static_cast<int>(p[i].size()); ++k) out[i].push_back(p[i][k]);
    out[i].resize(T, ControlInput2D{});
  }
  return out;
}

}  // namespace

Snapshot make_snapshot(const ScenarioConfig& cfg, const world::World& w,
                       const std::array<std::vector<Kinematics2D>, 2>& ref, const std::vector<ctm::CellLane>* lanes,
                       Phase phase, int follower) {
  Snapshot s;
  s.geometry = cfg.geometry;
  s.limits = cfg.limits;
  s.dt = cfg.dt;
  s.horizon = cfg.horizon;
  s.desired_spacing = cfg.desired_spacing;
  s.big_m = cfg.big_m > 0 ? cfg.big_m : cfg.road_length;
  s.phase = phase;
  s.follower = follower;
  for (int i = 0; i < 2; ++i) {
    const auto& v = w.vehicles[w.subj[i]];
    s.subject[i] = v.state;
    s.subject_id[i] = v.id;
    s.subject_params[i] = v.params;
  }
  auto worlds = world::rollout(w, ref);
  for (std::size_t j = 0; j < w.vehicles.size(); ++j) {
    if (static_cast<int>(j) == w.subj[0] || static_cast<int>(j) == w.subj[1]) continue;
    NeighborPrediction n;
    n.id = w.vehicles[j].id;
    n.cls = w.vehicles[j].cls;
    n.lane = w.lane_of(static_cast<int>(j));
    n.params = w.vehicles[j].params;
    for (const auto& wt : worlds) {
      n.x.push_back(wt.vehicles[j].state.x);
      n.v.push_back(wt.vehicles[j].state.vx);
    }
    s.neighbors.push_back(std::move(n));
  }
  if (lanes) s.flow_penalty = flow_penalty(*lanes, worlds, ref, cfg.dt, cfg.horizon);
  return s;
}

PcResult predictor_corrector_iterate(const ScenarioConfig& cfg, const world::World& w,
                                     const std::vector<ctm::CellLane>* lanes, Phase phase, int follower,
                                     const weights::WeightConfig& weights, const MpcOptions& opt,
                                     const Plan* previous) {
  PcResult res;
  Snapshot base = make_snapshot(cfg, w, {std::vector<Kinematics2D>{w.vehicles[w.subj[0]].state},
                                         std::vector<Kinematics2D>{w.vehicles[w.subj[1]].state}},
                                nullptr, phase, follower);
  base.horizon = cfg.horizon;
  Plan warm;
  const Plan* warm_ptr = nullptr;
  if (previous) {
    warm = shifted(*previous, cfg.horizon);
    warm_ptr = &warm;
  }
  auto ref = reference(base, warm_ptr);
  Snapshot snap = make_snapshot(cfg, w, ref, lanes, phase, follower);
  for (int it = 1; it <= std::max(1, opt.pc_max_iters); ++it) {
    MpcProblem prob = assemble_constraints(snap, opt);
    assemble_objective(prob, phase, weights);
    MpcSolution sol = solve(prob, opt, warm_ptr);
    res.iterations = it;
    if (it == 1) res.first = sol;
    if (!sol.ok()) {
      if (it == 1) res.last = sol;
      break;
    }
    res.last = sol;
    auto traj = trajectory(snap, sol.u);
    double diff = 0.0;
    for (int i = 0; i < 2; ++i)
      for (std::size_t t = 0; t < traj[i].size(); ++t)
        diff = std::max({diff, std::abs(traj[i][t].x - ref[i][t].x), std::abs(traj[i][t].y - ref[i][t].y)});
    Snapshot next = make_snapshot(cfg, w, traj, lanes, phase, follower);
    // identical predictions would reproduce this plan, so the fixed point is reached without another solve
    if (diff < opt.pc_tol || same_predictions(snap, next)) {
      res.converged = true;
      break;
    }
    ref = traj;
    snap = std::move(next);
    warm = sol.u;
    warm_ptr = &warm;
  }
  return res;
}

MpcSolution brute_force_oracle(const MpcProblem& p, const world::World& w, const OracleGrid& grid) {
  const Snapshot& s = p.snap;
  const int T = p.T;
  if (T > 3 || s.neighbors.size() > 2 || s.geometry.count() > 2)
    throw std::invalid_argument("oracle instance exceeds T <= 3, 2 neighbors, 2 lanes");
  const auto& L = s.limits;
  const auto& W = p.weights;
  const double dt = s.dt;
  const int NL = s.geometry.count();

  std::vector<double> uxs;
  for (double u = L.a_min; u <= L.a_max + 1e-9; u += grid.ux_step) uxs.push_back(u);
  struct Cand {
    std::vector<ControlInput2D> u;
    std::vector<Kinematics2D> traj;
    std::vector<int> lane;
    double cost = 0;  // J_u + J_w
  };
  std::array<std::vector<Cand>, 2> cands;
  const double qw[2] = {W.q_w1, W.q_w2};
  for (int i = 0; i < 2; ++i) {
    const int per = static_cast<int>(uxs.size() * grid.uy_values.size());
    long total = 1;
    for (int k = 0; k < T; ++k) total *= per;
    for (long code = 0; code < total; ++code) {
      Cand c;
      long r = code;
      for (int k = 0; k < T; ++k) {
        int q = static_cast<int>(r % per);
        r /= per;
        c.u.push_back({uxs[q / grid.uy_values.size()], grid.uy_values[q % grid.uy_values.size()]});
      }
      c.traj.push_back(s.subject[i]);
      c.lane.push_back(relations::eval_lane_membership(s.subject[i].y, s.geometry));
      bool ok = true;
      for (int k = 0; k < T && ok; ++k) {
        auto nx = micro::step_subject(c.traj.back(), c.u[k], dt);
        ok = nx.vx >= L.v_min - 1e-9 && nx.vx <= L.v_max + 1e-9 && std::abs(nx.vy) <= L.vy_max + 1e-9 &&
             nx.y >= s.geometry.lower() && nx.y <= s.geometry.upper();
        c.traj.push_back(nx);
        if (ok) c.lane.push_back(relations::eval_lane_membership(nx.y, s.geometry));
        c.cost += 0.5 * W.q_u * (c.u[k].ux * c.u[k].ux + c.u[k].uy * c.u[k].uy);
        double e = nx.vx - L.v_max;
        c.cost += 0.5 * qw[i] / W.w_norm * e * e;
      }
      if (!ok || std::abs(c.traj.back().vy) > 1e-9) continue;
      cands[i].push_back(std::move(c));
    }
  }

  // index of the neighbor directly ahead of neighbor k in its lane at step t
  auto ahead_of = [&](const world::World& wt, int j) {
    int best = -1;
    int lj = wt.lane_of(j);
    for (std::size_t m = 0; m < wt.vehicles.size(); ++m) {
      int mm = static_cast<int>(m);
      if (mm == j || mm == wt.subj[0] || mm == wt.subj[1]) continue;
      if (wt.lane_of(mm) != lj || wt.vehicles[m].state.x <= wt.vehicles[j].state.x) continue;
      if (best < 0 || wt.vehicles[m].state.x < wt.vehicles[best].state.x) best = mm;
    }
    return best;
  };
  auto cut_state = [&](const world::World& wt, int i, int j) {
    const auto& si = wt.vehicles[wt.subj[i]].state;
    const auto& nj = wt.vehicles[j].state;
    int k2 = ahead_of(wt, j);
    return wt.lane_of(wt.subj[i]) == wt.lane_of(j) && si.x >= nj.x &&
           (k2 < 0 || si.x < wt.vehicles[k2].state.x);
  };

  MpcSolution best;
  best.status = SolveStatus::Infeasible;
  double best_obj = 1e300;
  for (const auto& a : cands[0])
    for (const auto& b : cands[1]) {
      const Cand* cd[2] = {&a, &b};
      auto worlds = world::rollout(w, {a.traj, b.traj});
      double obj = a.cost + b.cost;
      Breakdown parts;
      bool ok = true;
      for (int t = 1; t <= T && ok; ++t) {
        const auto& wt = worlds[t];
        const auto& wp = worlds[t - 1];
        for (int i = 0; i < 2 && ok; ++i) {
          const auto& si = cd[i]->traj[t];
          const auto& sp = s.subject_params[i];
          for (std::size_t j = 0; j < wt.vehicles.size() && ok; ++j) {
            int jj = static_cast<int>(j);
            if (jj == wt.subj[0] || jj == wt.subj[1]) continue;
            const auto& nb = wt.vehicles[j];
            if (wt.lane_of(jj) != cd[i]->lane[t]) continue;
            if (nb.state.x > si.x)
              ok = nb.state.x - si.x >= micro::safety_gap(si.vx, sp, L) - 1e-9;
            else
              ok = si.x - nb.state.x >= nb.params.length - 1e-9;
            if (!ok) break;
            if (cut_state(wt, i, jj) && !cut_state(wp, i, jj)) {
              if (nb.cls == VehicleClass::Hdv) {
                ok = si.x - nb.state.x >= nb.params.newell_displacement +
                                              nb.params.reaction_time / dt * nb.state.vx - 1e-9 &&
                     si.vx >= nb.state.vx - 1e-9;
              } else {
                auto cc = micro::cacc_coefficients(nb.params, dt);
                double at = std::max(L.a_min, (L.v_min - cd[i]->traj[t - 1].vx) / dt);
                ok = si.vx - nb.state.vx >= micro::ncav_threshold(at, dt, cc) - 1e-9;
              }
            }
          }
        }
        if (!ok) break;
        if (a.lane[t] == b.lane[t]) {
          int f = a.traj[t].x < b.traj[t].x ? 0 : 1;
          const auto& sf = cd[f]->traj[t];
          ok = cd[1 - f]->traj[t].x - sf.x >= micro::safety_gap(sf.vx, s.subject_params[f], L) - 1e-9;
          if (!ok) break;
        }
        std::vector<Kinematics2D> states;
        for (const auto& v : wt.vehicles) states.push_back(v.state);
        auto fm = relations::eval_following(states, s.geometry);
        int i0 = wt.subj[0], i1 = wt.subj[1];
        bool e01 = false, e10 = false;
        for (int l = 0; l < NL; ++l) {
          e01 = e01 || fm.at(i0, i1, l);
          e10 = e10 || fm.at(i1, i0, l);
        }
        if (p.phase == Phase::Platoon) {
          if (!(s.follower == 0 ? e01 : e10)) {
            ok = false;
            break;
          }
          double dv = a.traj[t].vx - b.traj[t].vx;
          parts.J_v += 0.5 * W.q_v / W.w_norm * dv * dv;
          int ld = 1 - s.follower;
          double dev = cd[ld]->traj[t].x - cd[s.follower]->traj[t].x - s.desired_spacing;
          parts.J_z += W.q_z * std::abs(dev) / s.desired_spacing;
        } else {
          parts.J_eta += 0.5 * W.q_eta * ((e01 ? 1 : 0) + (e10 ? 1 : 0));
        }
        if (!s.flow_penalty.empty())
          for (int i = 0; i < 2; ++i)
            parts.J_y -= 0.5 * W.q_y * s.flow_penalty[(i * T + t - 1) * NL + cd[i]->lane[t]];
      }
      if (!ok) continue;
      obj += -parts.J_y - parts.J_eta + parts.J_v + parts.J_z;
      if (obj < best_obj - 1e-12) {
        best_obj = obj;
        best.status = SolveStatus::Optimal;
        best.objective = obj;
        best.u = {a.u, b.u};
        for (int k = 0; k < T; ++k) {
          parts.J_u += 0.5 * W.q_u * (a.u[k].ux * a.u[k].ux + a.u[k].uy * a.u[k].uy + b.u[k].ux * b.u[k].ux +
                                      b.u[k].uy * b.u[k].uy);
        }
        parts.J_w = a.cost + b.cost - parts.J_u;
        best.parts = parts;
      }
    }
  return best;
}

}  // namespace synccav::mpc
