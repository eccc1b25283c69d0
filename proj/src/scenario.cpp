#include "synccav/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "synccav/micro.hpp"
#include "synccav/relations.hpp"

namespace synccav {

const char* to_string(VehicleClass c) {
  switch (c) {
    case VehicleClass::SubjectCav: return "subject";
    case VehicleClass::NeighborCav: return "ncav";
    case VehicleClass::Hdv: return "hdv";
  }
  return "?";
}

VehicleClass vehicle_class_from_string(const std::string& s) {
  if (s == "subject" || s == "s-cav") return VehicleClass::SubjectCav;
  if (s == "ncav" || s == "n-cav") return VehicleClass::NeighborCav;
  if (s == "hdv") return VehicleClass::Hdv;
  throw std::invalid_argument("unknown vehicle class '" + s + "'");
}

const char* to_string(Phase p) { return p == Phase::CatchUp ? "q1" : "q2"; }

LaneGeometry LaneGeometry::uniform(int count, double width) {
  LaneGeometry g;
  for (int l = 0; l < count; ++l) g.lanes.push_back({l * width, (l + 1) * width});
  return g;
}

static std::string join_lines(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& m : v) s += (s.empty() ? "" : "; ") + m;
  return s;
}

ValidationError::ValidationError(std::vector<std::string> msgs)
    : std::runtime_error("scenario validation failed: " + join_lines(msgs)), messages(std::move(msgs)) {}

}  // namespace synccav

namespace synccav::scenario {

namespace {

std::string veh_tag(const Vehicle& v) { return "vehicle " + std::to_string(v.id); }

bool finite(double v) { return std::isfinite(v); }

}  // namespace

int ValidatedScenario::reaction_steps(int vehicle_index) const {
  const auto& v = cfg_->vehicles.at(vehicle_index);
  return static_cast<int>(std::lround(v.params.reaction_time / cfg_->dt));
}

ValidatedScenario validate_scenario(const ScenarioConfig& in) {
  ScenarioConfig cfg = in;
  std::vector<std::string> err;
  std::vector<std::string> warn;

  if (!(cfg.dt > 0) || !finite(cfg.dt)) err.push_back("time step must be positive");
  if (cfg.horizon < 1) err.push_back("horizon must be at least 1 step");
  const auto& lim = cfg.limits;
  if (!(lim.v_min < lim.v_max)) err.push_back("limits: v_min must be below v_max");
  if (!(lim.a_min < 0 && lim.a_max > 0)) err.push_back("limits: need a_min < 0 < a_max");
  if (!(lim.vy_max > 0)) err.push_back("limits: vy_max must be positive");
  if (!(lim.ay_max > 0)) err.push_back("limits: ay_max must be positive");

  const auto& geo = cfg.geometry;
  if (geo.lanes.empty()) {
    err.push_back("geometry: at least one lane required");
  } else {
    double w0 = geo.lanes[0].upper_y - geo.lanes[0].lower_y;
    if (!(w0 > 0)) err.push_back("geometry: lane width must be positive");
    for (std::size_t l = 1; l < geo.lanes.size(); ++l) {
      if (std::abs(geo.lanes[l].lower_y - geo.lanes[l - 1].upper_y) > 1e-9)
        err.push_back("geometry: lanes must be contiguous and ordered by y (lane " + std::to_string(l + 1) + ")");
      double w = geo.lanes[l].upper_y - geo.lanes[l].lower_y;
      if (std::abs(w - w0) > 1e-9) err.push_back("geometry: lane " + std::to_string(l + 1) + " width differs");
    }
  }

  if (cfg.cell_length + 1e-12 < cfg.dt * lim.v_max)
    err.push_back("CFL violated: cell length < dt*v_max");
  if (!(cfg.road_length > 0)) err.push_back("road length must be positive");
  if (cfg.big_m == 0.0) cfg.big_m = cfg.road_length;
  if (cfg.big_m < cfg.road_length) err.push_back("big-M must be at least the road length");
  if (!(cfg.desired_spacing > 0)) err.push_back("desired spacing must be positive");
  if (!(cfg.monitoring_range > 0)) err.push_back("monitoring range must be positive");
  if (!(cfg.ctm.q_max > 0 && cfg.ctm.k_jam > 0 && cfg.ctm.wave_speed > 0))
    err.push_back("CTM parameters must be positive");
  if (!cfg.initial_flow.empty() && static_cast<int>(cfg.initial_flow.size()) != geo.count())
    err.push_back("initial_flow must have one entry per lane");
  for (double f : cfg.initial_flow)
    if (!(f >= 0)) err.push_back("initial_flow entries must be non-negative");
  if (!(cfg.inflow >= 0)) err.push_back("inflow must be non-negative");
  auto& wb = cfg.weights;
  if (wb.q_u < 0 || wb.q_v < 0 || wb.q_y < 0 || wb.alpha1 < 0 || wb.alpha2 < 0)
    err.push_back("weights must be non-negative");
  if (!(wb.xi_max > 0)) err.push_back("xi_max must be positive");

  std::set<int> ids;
  int subjects[2] = {-1, -1};
  int n_subj = 0;
  for (std::size_t k = 0; k < cfg.vehicles.size(); ++k) {
    auto& v = cfg.vehicles[k];
    const std::string tag = veh_tag(v);
    if (!ids.insert(v.id).second) err.push_back(tag + ": duplicate id");
    const auto& s = v.state;
    if (!finite(s.x) || !finite(s.y) || !finite(s.vx) || !finite(s.vy)) {
      err.push_back(tag + ": non-finite state");
      continue;
    }
    if (s.x < 0 || s.x > cfg.road_length) err.push_back(tag + ": x outside roadway");
    if (!geo.lanes.empty() && (s.y < geo.lower() || s.y > geo.upper())) err.push_back(tag + ": y outside roadway");
    auto& p = v.params;
    if (!(p.length > 0)) err.push_back(tag + ": length must be positive");
    if (!(p.reaction_time > 0)) err.push_back(tag + ": reaction time must be positive");
    if (!(p.newell_displacement > 0)) err.push_back(tag + ": newell displacement must be positive");
    bool has_cacc = p.cacc_k1 || p.cacc_k2 || p.cacc_time_gap;
    if (v.cls == VehicleClass::NeighborCav) {
      if (!(p.cacc_k1 && p.cacc_k2 && p.cacc_time_gap)) err.push_back(tag + ": n-CAV requires k1, k2 and t_d");
    } else if (has_cacc) {
      err.push_back(tag + ": CACC gains only allowed for n-CAVs");
    }
    if (cfg.dt > 0 && p.reaction_time > 0) {
      double k = std::round(p.reaction_time / cfg.dt);
      if (k < 1) {
        err.push_back(tag + ": reaction time rounds to zero steps");
      } else {
        p.reaction_time = k * cfg.dt;
      }
    }
    if (v.cls == VehicleClass::SubjectCav) {
      if (n_subj < 2) subjects[n_subj] = static_cast<int>(k);
      ++n_subj;
      if (s.vx < lim.v_min - 1e-9 || s.vx > lim.v_max + 1e-9) err.push_back(tag + ": speed outside [v_min, v_max]");
      if (std::abs(s.vy) > lim.vy_max + 1e-9) err.push_back(tag + ": lateral speed exceeds vy_max");
    }
  }
  if (n_subj != 2) err.push_back("exactly two subject CAVs required, found " + std::to_string(n_subj));

  if (err.empty()) {
    // Initial safety gaps: subject followers use the full braking bound, others the vehicle length.
    const int nv = static_cast<int>(cfg.vehicles.size());
    std::vector<int> lane(nv);
    for (int k = 0; k < nv; ++k) lane[k] = relations::eval_lane_membership(cfg.vehicles[k].state.y, geo);
    for (int a = 0; a < nv; ++a) {
      for (int b = 0; b < nv; ++b) {
        if (a == b || lane[a] != lane[b]) continue;
        const auto& f = cfg.vehicles[a];
        const auto& l = cfg.vehicles[b];
        if (l.state.x < f.state.x || (l.state.x == f.state.x && b < a)) continue;
        double gap = l.state.x - f.state.x;
        double need = f.cls == VehicleClass::SubjectCav ? micro::safety_gap(f.state.vx, f.params, lim) : f.params.length;
        if (gap < need - 1e-9) {
          err.push_back("initial safety gap violated between vehicles " + std::to_string(f.id) + " and " +
                        std::to_string(l.id));
        }
      }
    }
    if (subjects[0] >= 0 && subjects[1] >= 0 && cfg.vehicles[subjects[0]].id > cfg.vehicles[subjects[1]].id)
      std::swap(subjects[0], subjects[1]);
  }

  if (!err.empty()) throw ValidationError(err);

  ValidatedScenario out;
  out.cfg_ = std::make_shared<const ScenarioConfig>(std::move(cfg));
  out.warnings_ = std::move(warn);
  out.subjects_[0] = subjects[0];
  out.subjects_[1] = subjects[1];
  return out;
}

Phase initial_phase(const ValidatedScenario& sc) {
  const auto& cfg = sc.config();
  std::vector<Kinematics2D> states;
  for (const auto& v : cfg.vehicles) states.push_back(v.state);
  auto eta = relations::eval_following(states, cfg.geometry);
  int a = sc.subject(0), b = sc.subject(1);
  return (eta.follows(a, b) || eta.follows(b, a)) ? Phase::Platoon : Phase::CatchUp;
}

// ---- JSON ----

using nlohmann::json;

ScenarioConfig parse_scenario_json(const std::string& text) {
  json j = json::parse(text);
  ScenarioConfig c;
  if (j.contains("lanes")) {
    const auto& g = j["lanes"];
    if (g.is_object()) {
      c.geometry = LaneGeometry::uniform(g.value("count", 3), g.value("width", 3.6));
    } else {
      c.geometry.lanes.clear();
      for (const auto& l : g) c.geometry.lanes.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
    }
  }
  if (j.contains("limits")) {
    const auto& l = j["limits"];
    c.limits.v_min = l.value("v_min", c.limits.v_min);
    c.limits.v_max = l.value("v_max", c.limits.v_max);
    c.limits.a_min = l.value("a_min", c.limits.a_min);
    c.limits.a_max = l.value("a_max", c.limits.a_max);
    c.limits.vy_max = l.value("vy_max", c.limits.vy_max);
    c.limits.ay_max = l.value("ay_max", c.limits.ay_max);
  }
  c.dt = j.value("dt", c.dt);
  c.horizon = j.value("horizon", c.horizon);
  c.cell_length = j.value("cell_length", c.cell_length);
  c.road_length = j.value("road_length", c.road_length);
  if (j.contains("ctm")) {
    const auto& t = j["ctm"];
    c.ctm.q_max = t.value("q_max", c.ctm.q_max);
    c.ctm.k_jam = t.value("k_jam", c.ctm.k_jam);
    c.ctm.wave_speed = t.value("wave_speed", c.ctm.wave_speed);
  }
  c.desired_spacing = j.value("desired_spacing", c.desired_spacing);
  c.monitoring_range = j.value("monitoring_range", c.monitoring_range);
  c.big_m = j.value("big_m", c.big_m);
  c.inflow = j.value("inflow", c.inflow);
  if (j.contains("initial_flow")) c.initial_flow = j["initial_flow"].get<std::vector<double>>();
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.q_u = w.value("q_u", c.weights.q_u);
    c.weights.q_v = w.value("q_v", c.weights.q_v);
    c.weights.q_y = w.value("q_y", c.weights.q_y);
    c.weights.alpha1 = w.value("alpha1", c.weights.alpha1);
    c.weights.alpha2 = w.value("alpha2", c.weights.alpha2);
    c.weights.xi_max = w.value("xi_max", c.weights.xi_max);
  }
  for (const auto& v : j.at("vehicles")) {
    Vehicle veh;
    veh.id = v.at("id").get<int>();
    veh.cls = vehicle_class_from_string(v.at("class").get<std::string>());
    veh.state.x = v.at("x").get<double>();
    veh.state.y = v.at("y").get<double>();
    veh.state.vx = v.at("vx").get<double>();
    veh.state.vy = v.value("vy", 0.0);
    veh.params.length = v.value("length", veh.params.length);
    veh.params.reaction_time = v.value("tau", veh.cls == VehicleClass::Hdv ? 2.0 : 1.0);
    veh.params.newell_displacement = v.value("d", veh.params.newell_displacement);
    if (v.contains("k1")) veh.params.cacc_k1 = v["k1"].get<double>();
    if (v.contains("k2")) veh.params.cacc_k2 = v["k2"].get<double>();
    if (v.contains("td")) veh.params.cacc_time_gap = v["td"].get<double>();
    c.vehicles.push_back(veh);
  }
  return c;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_json(ss.str());
}

std::string scenario_to_json(const ScenarioConfig& c) {
  json j;
  json lanes = json::array();
  for (const auto& l : c.geometry.lanes) lanes.push_back({l.lower_y, l.upper_y});
  j["lanes"] = lanes;
  j["limits"] = {{"v_min", c.limits.v_min}, {"v_max", c.limits.v_max}, {"a_min", c.limits.a_min},
                 {"a_max", c.limits.a_max}, {"vy_max", c.limits.vy_max}, {"ay_max", c.limits.ay_max}};
  j["dt"] = c.dt;
  j["horizon"] = c.horizon;
  j["cell_length"] = c.cell_length;
  j["road_length"] = c.road_length;
  j["ctm"] = {{"q_max", c.ctm.q_max}, {"k_jam", c.ctm.k_jam}, {"wave_speed", c.ctm.wave_speed}};
  j["desired_spacing"] = c.desired_spacing;
  j["monitoring_range"] = c.monitoring_range;
  j["big_m"] = c.big_m;
  j["inflow"] = c.inflow;
  if (!c.initial_flow.empty()) j["initial_flow"] = c.initial_flow;
  j["weights"] = {{"q_u", c.weights.q_u},       {"q_v", c.weights.q_v},       {"q_y", c.weights.q_y},
                  {"alpha1", c.weights.alpha1}, {"alpha2", c.weights.alpha2}, {"xi_max", c.weights.xi_max}};
  json vs = json::array();
  for (const auto& v : c.vehicles) {
    json e = {{"id", v.id},
              {"class", to_string(v.cls)},
              {"x", v.state.x},
              {"y", v.state.y},
              {"vx", v.state.vx},
              {"vy", v.state.vy},
              {"length", v.params.length},
              {"tau", v.params.reaction_time},
              {"d", v.params.newell_displacement}};
    if (v.params.cacc_k1) e["k1"] = *v.params.cacc_k1;
    if (v.params.cacc_k2) e["k2"] = *v.params.cacc_k2;
    if (v.params.cacc_time_gap) e["td"] = *v.params.cacc_time_gap;
    vs.push_back(e);
  }
  j["vehicles"] = vs;
  return j.dump(2) + "\n";
}

}  // namespace synccav::scenario
