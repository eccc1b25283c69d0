#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "synccav/harness.hpp"
#include "synccav/relations.hpp"

namespace synccav::harness {

IngestError::IngestError(std::vector<std::string> it)
    : std::runtime_error([&] {
        std::string s = "trajectory ingest failed:";
        for (const auto& m : it) s += "\n  " + m;
        return s;
      }()),
      items(std::move(it)) {}

namespace {

constexpr double kFoot = 0.3048;

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) {
    auto b = cur.find_first_not_of(" \t\r");
    auto e = cur.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool to_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end && *end == '\0' && std::isfinite(v);
}

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << content;
  out.close();
  if (!out) throw std::runtime_error("write failed for '" + p.string() + "'");
}

std::vector<const std::vector<Vehicle>*> states(const SimTrace& t) {
  std::vector<const std::vector<Vehicle>*> s;
  for (const auto& r : t.steps) s.push_back(&r.vehicles);
  if (!t.final_vehicles.empty() && !t.truncated) s.push_back(&t.final_vehicles);
  return s;
}

}  // namespace

std::vector<TrajectoryRecord> parse_trajectories(const std::string& text, const IngestOptions& opt) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> errors;
  if (!std::getline(is, line)) throw IngestError({"empty file"});
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = split(line);
  const auto& C = opt.columns;
  const std::string* names[7] = {&C.vehicle_id, &C.frame, &C.time, &C.x, &C.y, &C.speed, &C.lane};
  int col[7];
  for (int k = 0; k < 7; ++k) {
    auto it = std::find(header.begin(), header.end(), *names[k]);
    col[k] = it == header.end() ? -1 : static_cast<int>(it - header.begin());
    if (col[k] < 0) errors.push_back("missing column '" + *names[k] + "'");
  }
  if (!errors.empty()) throw IngestError(errors);

  std::vector<TrajectoryRecord> recs;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = split(line);
    double v[7];
    bool ok = true;
    for (int k = 0; k < 7; ++k) {
      if (col[k] >= static_cast<int>(f.size()) || !to_double(f[col[k]], v[k])) {
        errors.push_back("line " + std::to_string(lineno) + ": bad value in column '" + *names[k] + "'");
        ok = false;
      }
    }
    if (!ok) continue;
    TrajectoryRecord r;
    r.id = static_cast<int>(v[0]);
    r.frame = static_cast<long>(v[1]);
    r.time = v[2];
    const double s = opt.feet ? kFoot : 1.0;
    r.x = v[3] * s;
    r.y = v[4] * s;
    r.speed = v[5] * s;
    r.lane = static_cast<int>(v[6]);
    recs.push_back(r);
  }

  std::map<int, std::vector<const TrajectoryRecord*>> by_id;
  for (const auto& r : recs) by_id[r.id].push_back(&r);
  for (auto& [id, rs] : by_id) {
    std::set<long> frames;
    for (const auto* r : rs)
      if (!frames.insert(r->frame).second)
        errors.push_back("vehicle " + std::to_string(id) + ": duplicate frame " + std::to_string(r->frame));
    std::vector<const TrajectoryRecord*> sorted = rs;
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->frame < b->frame; });
    for (std::size_t k = 1; k < sorted.size(); ++k) {
      if (sorted[k]->frame == sorted[k - 1]->frame) continue;
      if (!(sorted[k]->time > sorted[k - 1]->time))
        errors.push_back("vehicle " + std::to_string(id) + ": time not increasing at frame " +
                         std::to_string(sorted[k]->frame));
      if (sorted[k]->frame != sorted[k - 1]->frame + 1)
        errors.push_back("vehicle " + std::to_string(id) + ": frames " + std::to_string(sorted[k - 1]->frame) +
                         " to " + std::to_string(sorted[k]->frame) + " are not contiguous");
    }
  }
  if (!errors.empty()) throw IngestError(errors);
  return recs;
}

ScenarioConfig scenario_from_records(const std::vector<TrajectoryRecord>& recs, const IngestOptions& opt) {
  if (recs.empty()) throw IngestError({"no trajectory rows"});
  double t0 = opt.window_start;
  if (t0 < 0) {
    t0 = recs.front().time;
    for (const auto& r : recs) t0 = std::min(t0, r.time);
  }
  std::map<int, const TrajectoryRecord*> at;
  for (const auto& r : recs)
    if (std::abs(r.time - t0) < 1e-6) at[r.id] = &r;
  if (at.size() < 2) throw IngestError({"fewer than two vehicles at the window start " + fmt(t0, 3) + " s"});
  int a = opt.subject_a, b = opt.subject_b;
  if (a < 0 || b < 0) {
    auto it = at.begin();
    a = it->first;
    b = (++it)->first;
  }
  std::vector<std::string> errors;
  if (!at.count(a)) errors.push_back("subject vehicle " + std::to_string(a) + " absent at the window start");
  if (!at.count(b)) errors.push_back("subject vehicle " + std::to_string(b) + " absent at the window start");
  if (a == b) errors.push_back("subject vehicles must differ");
  int lanes = opt.lanes;
  for (const auto& [id, r] : at) {
    if (r->lane < 1) errors.push_back("vehicle " + std::to_string(id) + ": lane id must be >= 1");
    if (opt.lanes > 0 && r->lane > opt.lanes)
      errors.push_back("vehicle " + std::to_string(id) + ": lane " + std::to_string(r->lane) + " exceeds lane count");
    if (opt.lanes <= 0) lanes = std::max(lanes, r->lane);
  }
  if (!errors.empty()) throw IngestError(errors);

  ScenarioConfig c;
  c.geometry = LaneGeometry::uniform(lanes, opt.lane_width);
  double xmin = 1e300, xmax = -1e300;
  for (const auto& [id, r] : at) {
    xmin = std::min(xmin, r->x);
    xmax = std::max(xmax, r->x);
  }
  const double offset = 100.0 - xmin;
  c.road_length = std::max(c.road_length, std::ceil((xmax + offset + 2000.0) / c.cell_length) * c.cell_length);
  for (const auto& [id, r] : at) {
    Vehicle v;
    v.id = id;
    v.cls = id == a || id == b ? VehicleClass::SubjectCav : VehicleClass::Hdv;
    v.state.x = r->x + offset;
    v.state.y = c.geometry.center(r->lane - 1);
    v.state.vx = std::clamp(r->speed, c.limits.v_min, c.limits.v_max);
    c.vehicles.push_back(v);
  }
  return c;
}

ScenarioConfig load_trajectories(const std::string& path, const IngestOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trajectory file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_records(parse_trajectories(ss.str(), opt), opt);
}

std::string trajectory_csv(const SimTrace& t) {
  std::string out = "step,id,class,x,y,vx,vy,lane\n";
  auto st = states(t);
  for (std::size_t s = 0; s < st.size(); ++s)
    for (const auto& v : *st[s]) {
      int lane = relations::eval_lane_membership(v.state.y, t.geometry) + 1;
      out += std::to_string(s) + "," + std::to_string(v.id) + "," + to_string(v.cls) + "," + fmt(v.state.x) + "," +
             fmt(v.state.y) + "," + fmt(v.state.vx) + "," + fmt(v.state.vy) + "," + std::to_string(lane) + "\n";
    }
  return out;
}

std::string metrics_json(const Metrics& m, const SimTrace& t) {
  nlohmann::ordered_json j;
  j["complete"] = m.complete;
  j["termination"] = t.termination;
  j["steps"] = m.steps;
  j["catchup_reached"] = m.catchup_reached;
  j["synced"] = m.synced;
  j["sync_time_catchup_s"] = m.sync_time_catchup;
  j["sync_time_total_s"] = m.sync_time_total;
  j["avg_traffic_speed_mps"] = m.avg_traffic_speed;
  j["control_rms_mps2"] = m.control_rms;
  j["relative_speed_variance"] = m.rel_speed_var;
  j["infeasible_steps"] = m.infeasible_steps;
  j["gap_violations"] = m.gap_violations;
  j["min_gap_m"] = m.min_gap;
  j["phase_switches_to_platoon"] = m.phase_switches_to_q2;
  j["tolerances"] = {{"eps_d_m", m.tol.eps_d}, {"eps_v_mps", m.tol.eps_v}, {"hold_steps", m.tol.hold}};
  j["flow_account"] = {{"initial", t.account.initial},     {"inflow", t.account.inflow},
                       {"outflow", t.account.outflow},     {"exits", t.account.exits},
                       {"entries", t.account.entries},     {"current", t.account.current},
                       {"relative_error", t.account.relative_error()}};
  int clamps = 0, nonconv = 0, deferred = 0;
  for (const auto& r : t.steps) {
    clamps += r.safeguard_clamps;
    nonconv += !r.pc_converged;
    deferred += r.deferred_switch;
  }
  j["safeguard_clamps"] = clamps;
  j["nonconverged_steps"] = nonconv;
  j["deferred_platoon_entries"] = deferred;
  return j.dump(2) + "\n";
}

std::string plot_data(const SimTrace& t) {
  std::string out = "# t x1 x2 y1 y2 vx1 vx2 spacing phase ux1 ux2 uy1 uy2\n";
  auto st = states(t);
  for (std::size_t s = 0; s < st.size(); ++s) {
    const auto& vs = *st[s];
    std::array<int, 2> sl{-1, -1};
    for (std::size_t j = 0; j < vs.size(); ++j)
      if (vs[j].cls == VehicleClass::SubjectCav) (sl[0] < 0 ? sl[0] : sl[1]) = static_cast<int>(j);
    if (vs[sl[0]].id > vs[sl[1]].id) std::swap(sl[0], sl[1]);
    const auto& A = vs[sl[0]].state;
    const auto& B = vs[sl[1]].state;
    Phase ph = s < t.steps.size() ? t.steps[s].phase : t.final_phase;
    ControlInput2D u[2] = {};
    if (s < t.steps.size()) u[0] = t.steps[s].applied[0], u[1] = t.steps[s].applied[1];
    out += fmt(s * t.dt, 3) + " " + fmt(A.x) + " " + fmt(B.x) + " " + fmt(A.y) + " " + fmt(B.y) + " " + fmt(A.vx) +
           " " + fmt(B.vx) + " " + fmt(std::abs(A.x - B.x)) + " " + (ph == Phase::CatchUp ? "1" : "2") + " " +
           fmt(u[0].ux) + " " + fmt(u[1].ux) + " " + fmt(u[0].uy) + " " + fmt(u[1].uy) + "\n";
  }
  return out;
}

std::string loss_log_csv(const SimTrace& t) {
  std::string out = "step,phase,dJ_w1,dJ_w2,dJ_eta,dJ_z,xi1,xi2,q_eta,q_z,status,nodes,pc_iterations,pc_converged\n";
  for (const auto& r : t.steps) {
    const auto& L = r.losses;
    out += std::to_string(r.step) + "," + (r.phase == Phase::CatchUp ? "q1" : "q2") + "," + fmt(L.dj_w1) + "," +
           fmt(L.dj_w2) + "," + fmt(L.dj_eta) + "," + fmt(L.dj_z) + "," + fmt(L.xi1) + "," + fmt(L.xi2) + "," +
           fmt(r.weights.q_eta) + "," + fmt(r.weights.q_z) + "," + mpc::to_string(r.status) + "," +
           std::to_string(r.nodes) + "," + std::to_string(r.pc_iterations) + "," + (r.pc_converged ? "1" : "0") +
           "\n";
  }
  return out;
}

void export_results(const SimTrace& t, const Metrics& m, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
  fs::path d(dir);
  write_file(d / "trajectory.csv", trajectory_csv(t));
  write_file(d / "flow.csv", ctm::flow_csv(ctm::upstream_impact_trace(t.flow)));
  write_file(d / "metrics.json", metrics_json(m, t));
  write_file(d / "plot.dat", plot_data(t));
  write_file(d / "losses.csv", loss_log_csv(t));
}

}  // namespace synccav::harness
