#include "synccav/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "synccav/micro.hpp"
#include "synccav/relations.hpp"
#include "synccav/scenario.hpp"

namespace synccav::harness {

double FlowAccount::relative_error() const {
  const double e = expected();
  return std::abs(current - e) / std::max(1.0, std::abs(e));
}

namespace {

relations::CellGrid grid_of(const ctm::CellLane& lane) { return {lane.cell_length, lane.cells()}; }

bool on_road(double x, const relations::CellGrid& g) { return x >= 0.0 && x <= g.extent(); }

void add_vehicle_to_flow(ctm::CellLane& lane, double x, double dt) {
  lane.f[relations::eval_cell(x, grid_of(lane))] += 3600.0 / dt;
  ctm::refresh(lane, dt);
}

std::vector<Kinematics2D> states_of(const std::vector<Vehicle>& vs) {
  std::vector<Kinematics2D> s;
  s.reserve(vs.size());
  for (const auto& v : vs) s.push_back(v.state);
  return s;
}

std::array<int, 2> subject_slots(const std::vector<Vehicle>& vs) {
  std::array<int, 2> s{-1, -1};
  for (std::size_t j = 0; j < vs.size(); ++j)
    if (vs[j].cls == VehicleClass::SubjectCav) (s[0] < 0 ? s[0] : s[1]) = static_cast<int>(j);
  if (s[1] >= 0 && vs[s[0]].id > vs[s[1]].id) std::swap(s[0], s[1]);
  return s;
}

int following_in(const std::vector<Vehicle>& vs, const LaneGeometry& geo) {
  auto s = subject_slots(vs);
  auto eta = relations::eval_following(states_of(vs), geo);
  if (eta.follows(s[0], s[1])) return 0;
  if (eta.follows(s[1], s[0])) return 1;
  return -1;
}

// Platoon condition of the synchronization-complete rule.
bool synced_state(const std::vector<Vehicle>& vs, const LaneGeometry& geo, double d, const SyncTolerances& tol) {
  int f = following_in(vs, geo);
  if (f < 0) return false;
  auto s = subject_slots(vs);
  const auto& F = vs[s[f]].state;
  const auto& Ld = vs[s[1 - f]].state;
  return std::abs(Ld.x - F.x - d) <= tol.eps_d && std::abs(Ld.vx - F.vx) <= tol.eps_v;
}

}  // namespace

std::vector<std::vector<double>> tracked_counts(const std::vector<ctm::CellLane>& lanes, const world::World& w) {
  std::vector<std::vector<double>> out;
  for (const auto& l : lanes) out.emplace_back(l.cells(), 0.0);
  for (std::size_t j = 0; j < w.vehicles.size(); ++j) {
    int l = w.lane_of(static_cast<int>(j));
    auto g = grid_of(lanes[l]);
    double x = w.vehicles[j].state.x;
    if (on_road(x, g)) out[l][relations::eval_cell(x, g)] += 1.0;
  }
  return out;
}

std::vector<ctm::CellLane> make_lanes(const ScenarioConfig& cfg, const world::World& w) {
  const int cells = std::max(1, static_cast<int>(std::ceil(cfg.road_length / cfg.cell_length - 1e-9)));
  std::vector<ctm::CellLane> lanes;
  for (int l = 0; l < cfg.geometry.count(); ++l) {
    double f0 = cfg.initial_flow.empty() ? 0.0 : cfg.initial_flow[l];
    lanes.push_back(ctm::make_lane(cells, cfg.ctm, cfg.cell_length, f0, cfg.inflow, cfg.dt));
  }
  auto tr = tracked_counts(lanes, w);
  for (std::size_t l = 0; l < lanes.size(); ++l) {
    lanes[l].tracked = tr[l];
    ctm::refresh(lanes[l], cfg.dt);
  }
  return lanes;
}

double total_vehicles(const std::vector<ctm::CellLane>& lanes, double dt) {
  double n = 0.0;
  for (const auto& l : lanes) n += ctm::vehicle_count(l, dt);
  return n;
}

std::vector<ctm::CellLane> couple_step(const std::vector<ctm::CellLane>& lanes, const world::World& before,
                                       const world::World& after, const std::vector<Vehicle>& removed, double dt,
                                       FlowAccount& acc, int* handoffs) {
  const auto g = grid_of(lanes.front());
  for (const auto& l : lanes) {
    acc.inflow += l.y[0] * dt / 3600.0;
    acc.outflow += l.outflow * dt / 3600.0;
  }
  std::map<int, double> x_next;
  for (const auto& v : after.vehicles) x_next[v.id] = v.state.x;
  for (const auto& v : removed) x_next[v.id] = v.state.x;
  for (const auto& v : before.vehicles) {
    auto it = x_next.find(v.id);
    if (it == x_next.end()) continue;
    bool was = on_road(v.state.x, g), now = on_road(it->second, g);
    if (was && !now && it->second > g.extent()) acc.exits += 1.0;
    if (!was && now && v.state.x < 0.0) acc.entries += 1.0;
  }
  auto tr = tracked_counts(lanes, after);
  std::vector<ctm::CellLane> next;
  for (std::size_t l = 0; l < lanes.size(); ++l) next.push_back(ctm::ctm_step(lanes[l], tr[l], dt));
  int n = 0;
  for (const auto& v : removed) {
    if (!on_road(v.state.x, g)) continue;
    add_vehicle_to_flow(next[relations::eval_lane_membership(v.state.y, after.geometry)], v.state.x, dt);
    ++n;
  }
  if (handoffs) *handoffs = n;
  acc.current = total_vehicles(next, dt);
  return next;
}

int following_subject(const world::World& w) { return following_in(w.vehicles, w.geometry); }

Phase phase_update(Phase current, bool following, int& absent, int fallback_steps, bool fallback) {
  if (current == Phase::CatchUp) {
    absent = 0;
    return following ? Phase::Platoon : Phase::CatchUp;
  }
  if (following) {
    absent = 0;
    return Phase::Platoon;
  }
  ++absent;
  if (fallback && absent >= fallback_steps) {
    absent = 0;
    return Phase::CatchUp;
  }
  return Phase::Platoon;
}

SimTrace run_closed_loop(const ScenarioConfig& cfg, const HarnessOptions& opt) {
  auto vs = scenario::validate_scenario(cfg);
  SimTrace tr;
  tr.tol = opt.tol;
  tr.desired_spacing = cfg.desired_spacing;
  tr.dt = cfg.dt;
  tr.v_max = cfg.limits.v_max;
  tr.monitoring_range = cfg.monitoring_range;

  world::World w = world::make_world(cfg);
  const int cells = std::max(1, static_cast<int>(std::ceil(cfg.road_length / cfg.cell_length - 1e-9)));
  const double road_end = cells * cfg.cell_length;
  auto removed0 = world::prune(w, cfg.monitoring_range, road_end);
  auto lanes = make_lanes(cfg, w);
  for (const auto& v : removed0)
    if (v.state.x >= 0 && v.state.x <= road_end)
      add_vehicle_to_flow(lanes[relations::eval_lane_membership(v.state.y, cfg.geometry)], v.state.x, cfg.dt);
  tr.account.initial = tr.account.current = total_vehicles(lanes, cfg.dt);

  Phase phase = scenario::initial_phase(vs);
  int follower = std::max(0, following_subject(w));
  if (phase == Phase::CatchUp) follower = 1;
  int absent = 0;
  const double w_norm = (cfg.limits.v_max - cfg.limits.v_min) * (cfg.limits.v_max - cfg.limits.v_min);
  const double x0[2] = {w.vehicles[w.subj[0]].state.x, w.vehicles[w.subj[1]].state.x};
  mpc::Plan prev_plan;
  bool have_plan = false;
  bool prior_ok = true;
  std::map<int, double> prev_v;
  bool switched = false;  // phase entered q2 at the end of the previous step
  int synced_run = synced_state(w.vehicles, cfg.geometry, cfg.desired_spacing, opt.tol) ? 1 : 0;
  tr.termination = "budget";

  for (int t = 0; t < opt.step_budget; ++t) {
    if (opt.stop_when_synced && synced_run >= opt.tol.hold) {
      tr.termination = "synced";
      break;
    }
    StepRecord rec;
    rec.step = t;
    rec.phase = phase;
    rec.follower = follower;
    rec.vehicles = w.vehicles;
    tr.flow.push_back(lanes);

    std::vector<double> pv;
    if (t > 0)
      for (const auto& v : w.vehicles) {
        auto it = prev_v.find(v.id);
        pv.push_back(it == prev_v.end() ? v.state.vx : it->second);
      }
    rec.feasibility = guard::check_theorem1(w.vehicles, cfg.geometry, cfg.limits, cfg.dt, prior_ok, pv);
    if (opt.strict_guard && !rec.feasibility.overall) {
      tr.steps.push_back(std::move(rec));
      tr.truncated = true;
      tr.termination = "guard";
      break;
    }

    const auto& A = w.vehicles[w.subj[0]].state;
    const auto& B = w.vehicles[w.subj[1]].state;
    auto attempt = [&](Phase ph, int fol) {
      auto base = weights::fixed_strategy(opt.strategy, ph, cfg.weights, w_norm);
      rec.losses = {};
      if (t > 0) {
        rec.losses.dj_w1 = weights::loss_w(A.x - x0[0], t, cfg.dt, cfg.limits.v_max);
        rec.losses.dj_w2 = weights::loss_w(B.x - x0[1], t, cfg.dt, cfg.limits.v_max);
      }
      rec.losses.dj_eta = weights::loss_eta(A.y, B.y, cfg.geometry);
      const auto& F = fol == 0 ? A : B;
      const auto& Ld = fol == 0 ? B : A;
      rec.losses.dj_z = weights::loss_z(F.x, Ld.x, cfg.desired_spacing);
      rec.losses.q_eta = base.q_eta;
      rec.losses.q_z = base.q_z;
      // the first step has no displacement history and keeps the phase defaults
      rec.weights = opt.strategy == weights::Strategy::Adaptive && t > 0 ? weights::adapt_weights(ph, rec.losses, base)
                                                                         : base;
      return mpc::predictor_corrector_iterate(cfg, w, &lanes, ph, fol, rec.weights, opt.mpc,
                                              have_plan ? &prev_plan : nullptr);
    };

    mpc::PcResult pc;
    try {
      bool defer = switched;
      if (defer) {
        // a new platoon is only entered when its problem is solvable; otherwise catch-up continues this step
        try {
          pc = attempt(phase, follower);
          defer = !pc.last.ok() && !pc.first.ok();
        } catch (const mpc::InfeasibleAtStart&) {
        }
        if (defer) {
          phase = rec.phase = Phase::CatchUp;
          follower = rec.follower = 1;
          rec.deferred_switch = true;
        }
      }
      if (!switched || defer) pc = attempt(phase, follower);
    } catch (const mpc::InfeasibleAtStart& e) {
      rec.status = mpc::SolveStatus::Infeasible;
      tr.steps.push_back(std::move(rec));
      tr.truncated = true;
      tr.termination = std::string("infeasible: ") + e.what();
      break;
    }
    const mpc::MpcSolution* sol = &pc.last;
    if (!pc.converged && pc.first.ok()) {
      sol = &pc.first;
      rec.used_first_iterate = true;
    }
    rec.status = sol->status;
    rec.pc_iterations = pc.iterations;
    rec.pc_converged = pc.converged;
    rec.nodes = sol->nodes;
    rec.wall = sol->wall;
    rec.objective = sol->objective;
    rec.gap = sol->gap;
    if (!sol->ok()) {
      tr.steps.push_back(std::move(rec));
      tr.truncated = true;
      tr.termination = "infeasible";
      break;
    }
    std::array<Kinematics2D, 2> next;
    for (int i = 0; i < 2; ++i) {
      rec.applied[i] = sol->u[i][0];
      next[i] = micro::step_subject(w.vehicles[w.subj[i]].state, rec.applied[i], cfg.dt);
    }
    prev_plan = sol->u;
    have_plan = true;
    prior_ok = true;
    prev_v.clear();
    for (const auto& v : w.vehicles) prev_v[v.id] = v.state.vx;

    world::AdvanceStats st;
    world::World nw = world::advance(w, next, &st);
    auto removed = world::prune(nw, cfg.monitoring_range, road_end);
    lanes = couple_step(lanes, w, nw, removed, cfg.dt, tr.account, &rec.handoffs);
    rec.safeguard_clamps = st.safeguard_clamps;
    w = std::move(nw);
    tr.steps.push_back(std::move(rec));

    int f = following_subject(w);
    bool following = phase == Phase::CatchUp ? f >= 0 : f == follower;
    Phase np = phase_update(phase, following, absent, opt.fallback_steps, opt.fallback);
    switched = phase == Phase::CatchUp && np == Phase::Platoon;
    if (switched) follower = f;
    if (np == Phase::CatchUp) follower = 1;
    phase = np;
    synced_run = synced_state(w.vehicles, cfg.geometry, cfg.desired_spacing, opt.tol) ? synced_run + 1 : 0;

    if (w.vehicles[w.subj[0]].state.x > road_end || w.vehicles[w.subj[1]].state.x > road_end) {
      tr.termination = "road_end";
      break;
    }
  }
  if (opt.stop_when_synced && synced_run >= opt.tol.hold && tr.termination == "budget") tr.termination = "synced";
  tr.flow.push_back(lanes);
  tr.final_vehicles = w.vehicles;
  tr.final_phase = phase;
  tr.geometry = cfg.geometry;
  return tr;
}

Metrics compute_metrics(const SimTrace& tr) {
  Metrics m;
  m.tol = tr.tol;
  m.steps = static_cast<int>(tr.steps.size());
  m.complete = !tr.truncated;
  std::vector<const std::vector<Vehicle>*> states;
  for (const auto& r : tr.steps) states.push_back(&r.vehicles);
  if (!tr.truncated) states.push_back(&tr.final_vehicles);
  const auto& geo = tr.geometry;

  int first_follow = -1, sync_start = -1, run = 0;
  std::vector<double> rel;
  double min_gap = 1e300;
  double speed_sum = 0.0;
  int speed_n = 0;
  for (std::size_t s = 0; s < states.size(); ++s) {
    const auto& vs = *states[s];
    if (vs.empty()) continue;
    if (first_follow < 0 && following_in(vs, geo) >= 0) first_follow = static_cast<int>(s);
    if (synced_state(vs, geo, tr.desired_spacing, tr.tol)) {
      if (++run >= tr.tol.hold && sync_start < 0) sync_start = static_cast<int>(s) - tr.tol.hold + 1;
    } else {
      run = 0;
    }
    auto sl = subject_slots(vs);
    rel.push_back(vs[sl[0]].state.vx - vs[sl[1]].state.vx);

    // same-lane gaps
    std::vector<std::pair<double, int>> order;
    for (std::size_t j = 0; j < vs.size(); ++j) order.push_back({vs[j].state.x, static_cast<int>(j)});
    std::sort(order.begin(), order.end());
    std::vector<int> last(geo.count(), -1);
    for (auto [x, j] : order) {
      int l = relations::eval_lane_membership(vs[j].state.y, geo);
      if (last[l] >= 0) {
        double gap = x - vs[last[l]].state.x - vs[j].params.length;
        min_gap = std::min(min_gap, gap);
        if (gap < -1e-9) ++m.gap_violations;
      }
      last[l] = j;
    }

    // neighbors plus upstream cells, weighted by vehicles
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < vs.size(); ++j) {
      if (vs[j].cls == VehicleClass::SubjectCav) continue;
      num += vs[j].state.vx;
      den += 1.0;
    }
    if (s < tr.flow.size()) {
      double rear = std::min(vs[sl[0]].state.x, vs[sl[1]].state.x);
      for (const auto& lane : tr.flow[s])
        for (int c = 0; c < lane.cells(); ++c) {
          double lo = c * lane.cell_length, hi = lo + lane.cell_length;
          if (hi > rear || hi < rear - tr.monitoring_range) continue;
          double n = lane.f[c] * tr.dt / 3600.0;
          if (n <= 0) continue;
          num += n * ctm::cell_speed(lane, c, tr.v_max);
          den += n;
        }
    }
    if (den > 0) {
      speed_sum += num / den;
      ++speed_n;
    }
  }
  m.min_gap = min_gap == 1e300 ? 0.0 : min_gap;
  m.catchup_reached = first_follow >= 0;
  m.sync_time_catchup = (first_follow >= 0 ? first_follow : static_cast<int>(states.size())) * tr.dt;
  m.synced = sync_start >= 0;
  m.sync_time_total = (sync_start >= 0 ? sync_start : static_cast<int>(states.size())) * tr.dt;
  m.sync_time_total = std::max(m.sync_time_total, m.sync_time_catchup);
  m.avg_traffic_speed = speed_n ? speed_sum / speed_n : 0.0;
  if (!rel.empty()) {
    double mean = 0.0;
    for (double r : rel) mean += r;
    mean /= rel.size();
    for (double r : rel) m.rel_speed_var += (r - mean) * (r - mean);
    m.rel_speed_var /= rel.size();
  }
  double u2 = 0.0;
  int nu = 0;
  for (std::size_t k = 0; k < tr.steps.size(); ++k) {
    const auto& r = tr.steps[k];
    Phase after = k + 1 < tr.steps.size() ? tr.steps[k + 1].phase : tr.final_phase;
    if (r.status != mpc::SolveStatus::Optimal && r.status != mpc::SolveStatus::Feasible) {
      ++m.infeasible_steps;
      continue;
    }
    if (r.phase == Phase::CatchUp && after == Phase::Platoon) ++m.phase_switches_to_q2;
    for (const auto& u : r.applied) u2 += u.ux * u.ux + u.uy * u.uy;
    nu += 2;
  }
  m.control_rms = nu ? std::sqrt(u2 / nu) : 0.0;
  return m;
}

double congestion_ratio(double k, double k_jam) {
  if (!(k_jam > 0)) throw std::invalid_argument("jam density must be positive");
  if (!(k >= 0 && k <= k_jam)) throw std::invalid_argument("density outside [0, k_jam]");
  const double r = k / k_jam;
  return 4.0 * r - 4.0 * r * r;
}

}  // namespace synccav::harness
