#include "synccav/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "synccav/relations.hpp"

namespace synccav::guard {

double reaction_time_bound(double v_min, double a, double d) {
  if (!(a < 0.0)) throw std::invalid_argument("reaction_time_bound requires a_min < 0");
  const double b = v_min - 5.0 * a;
  const double disc = b * b - 24.0 * a * d;
  if (disc < 0.0) throw std::invalid_argument("reaction_time_bound: negative discriminant");
  return (-b - std::sqrt(disc)) / (2.0 * a);
}

double reaction_time_bound_recursion(double v_min, double a, double d) {
  if (!(a < 0.0)) throw std::invalid_argument("reaction_time_bound requires a_min < 0");
  const double disc = v_min * v_min - 24.0 * a * d;
  if (disc < 0.0) throw std::invalid_argument("reaction_time_bound: negative discriminant");
  return (-v_min - std::sqrt(disc)) / (12.0 * a);
}

Threshold cutin_speed_threshold(double at, double dt, const micro::CaccCoefficients& c) {
  if (!(c.A > 0.0)) throw std::invalid_argument("cutin_speed_threshold requires A > 0");
  return {micro::ncav_threshold(at, dt, c), c.B > 0.5};
}

double a_tilde(double v_prev, const LimitSet& lim, double dt) {
  return std::max(lim.a_min, (lim.v_min - v_prev) / dt);
}

double phi_hat(double gap, double v, const VehicleParams& p, const LimitSet& lim) {
  return gap - micro::safety_gap(v, p, lim);
}

Interval admissible_interval(double v, double phi, double vl0, double vl1, const LimitSet& lim, double dt) {
  const double a = lim.a_min;
  const double av_lo = (lim.v_min - v) / dt;
  const double av_hi = (lim.v_max - v) / dt;
  const double e = v - lim.v_min;
  const double dt2 = dt * dt;
  const double B = e * e * dt2 / (a * a) + dt2 * dt * e / (-a) + 2.25 * dt2 * dt2 +
                   (2.0 * dt2 / (-a)) * ((0.5 * (vl0 + vl1) - lim.v_min) * dt + phi);
  Interval I;
  I.lo = std::max(a, av_lo);
  I.hi = std::min(lim.a_max, av_hi);
  if (B < 0.0) {
    I.hi = I.lo - 1.0;  // no admissible control
    return I;
  }
  const double ad = 1.5 * a + av_lo - a / dt2 * std::sqrt(B);
  I.hi = std::min(I.hi, ad);
  return I;
}

std::vector<double> spacing_recursion(double s0, double v0, double u, double tau, double d, int n_max) {
  double x1 = s0, v1 = v0, xh = 0.0, vh = v0, s = s0;
  std::vector<double> out{s};
  for (int n = 1; n <= n_max; ++n) {
    const double vh_next = (s - d) / tau;
    xh += tau * vh;
    vh = vh_next;
    x1 += tau * v1 + 0.5 * u * tau * tau;
    v1 += u * tau;
    s = x1 - xh;
    out.push_back(s);
  }
  return out;
}

std::vector<double> spacing_closed_form(double s0, double v0, double u, double tau, double d) {
  const double vt = v0 * tau, ut = u * tau * tau;
  return {s0,
          s0 + 0.5 * ut,
          vt + 2.0 * ut + d,
          2.0 * vt - s0 + 4.0 * ut + 2.0 * d,
          2.0 * vt - s0 + 5.5 * ut + 2.0 * d,
          vt + 6.0 * ut + d,
          s0 + 6.0 * ut};
}

FeasibilityReport check_theorem1(const std::vector<Vehicle>& vehicles, const LaneGeometry& geo, const LimitSet& lim,
                                 double dt, bool prior_feasible, const std::vector<double>& prev_vx) {
  FeasibilityReport r;
  r.condition_i = prior_feasible;
  std::vector<Kinematics2D> st;
  for (const auto& v : vehicles) st.push_back(v.state);
  const auto eta = relations::eval_following(st, geo);
  for (std::size_t j = 0; j < vehicles.size(); ++j) {
    const auto& v = vehicles[j];
    if (v.cls == VehicleClass::SubjectCav) continue;
    r.condition_ii.push_back({v.id, v.state.vx, v.state.vx >= lim.v_min && v.state.vx <= lim.v_max});
    if (v.cls == VehicleClass::Hdv) {
      TauCheck t;
      t.id = v.id;
      t.tau = v.params.reaction_time;
      t.bound = reaction_time_bound(lim.v_min, lim.a_min, v.params.newell_displacement);
      t.bound_recursion = reaction_time_bound_recursion(lim.v_min, lim.a_min, v.params.newell_displacement);
      t.ok = t.tau <= t.bound;
      r.condition_iii.push_back(t);
    } else {
      const int lead = eta.leader_of(static_cast<int>(j));
      if (lead < 0 || vehicles[lead].cls != VehicleClass::SubjectCav) continue;
      const auto c = micro::cacc_coefficients(v.params, dt);
      const double vp = prev_vx.empty() ? vehicles[lead].state.vx : prev_vx[lead];
      const auto th = cutin_speed_threshold(a_tilde(vp, lim, dt), dt, c);
      CutinCheck k;
      k.follower = v.id;
      k.leader = vehicles[lead].id;
      k.relative = vehicles[lead].state.vx - v.state.vx;
      k.threshold = th.value;
      k.applicable = th.applicable;
      k.ok = th.applicable && k.relative >= th.value;
      r.condition_iv.push_back(k);
    }
  }
  r.overall = r.condition_i;
  for (const auto& c : r.condition_ii) r.overall = r.overall && c.ok;
  for (const auto& c : r.condition_iii) r.overall = r.overall && c.ok;
  for (const auto& c : r.condition_iv) r.overall = r.overall && c.ok;
  return r;
}

std::string report_summary(const FeasibilityReport& r) {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "condition_i,%d\n", r.condition_i ? 1 : 0);
  out += buf;
  for (const auto& c : r.condition_ii) {
    std::snprintf(buf, sizeof buf, "condition_ii,%d,v=%.4f,%d\n", c.id, c.v, c.ok ? 1 : 0);
    out += buf;
  }
  for (const auto& c : r.condition_iii) {
    std::snprintf(buf, sizeof buf, "condition_iii,%d,tau=%.4f,bound=%.4f,bound_recursion=%.4f,%d\n", c.id, c.tau,
                  c.bound, c.bound_recursion, c.ok ? 1 : 0);
    out += buf;
  }
  for (const auto& c : r.condition_iv) {
    std::snprintf(buf, sizeof buf, "condition_iv,%d,%d,rel=%.4f,threshold=%.4f,%s\n", c.follower, c.leader,
                  c.relative, c.threshold, !c.applicable ? "not_applicable" : c.ok ? "1" : "0");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "overall,%d\n", r.overall ? 1 : 0);
  out += buf;
  return out;
}

}  // namespace synccav::guard
