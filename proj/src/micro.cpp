#include "synccav/micro.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace synccav::micro {

Kinematics2D step_subject(const Kinematics2D& s, const ControlInput2D& u, double dt) {
  const double h = 0.5 * dt * dt;
  return {s.x + dt * s.vx + h * u.ux, s.y + dt * s.vy + h * u.uy, s.vx + dt * u.ux, s.vy + dt * u.uy};
}

double safety_gap(double v, const VehicleParams& p, const LimitSet& lim) {
  if (!(lim.a_min < 0.0)) throw std::invalid_argument("safety_gap requires a_min < 0");
  const double dv = v - lim.v_min;
  return p.length + p.reaction_time * v - dv * dv / (2.0 * lim.a_min);
}

void emit_subject_safety_constraints(LinearConstraintSet& s, const std::string& tag, const Affine& x_follow,
                                     const Affine& v_follow, const Affine& x_lead, const Affine& act,
                                     const VehicleParams& p, const LimitSet& lim, double M) {
  if (!(lim.a_min < 0.0)) throw std::invalid_argument("safety rows require a_min < 0");
  // x_lead - x_follow - tau v + (v - v_min)^2/(2 a_min) + M act >= L
  Affine lhs = x_lead - x_follow - p.reaction_time * v_follow + M * act;
  QuadTerm q{v_follow - lim.v_min, 1.0 / (2.0 * lim.a_min)};
  s.add_quad_row(tag, lhs, q, Sense::GE, p.length);
}

double newell_predict(double spacing, const VehicleParams& p, double dt, const LimitSet& lim) {
  const double raw = dt / p.reaction_time * (spacing - p.newell_displacement);
  return std::clamp(raw, lim.v_min, lim.v_max);
}

double newell_position(double x, double v, double tau, double dt) { return x + (tau / dt) * v * dt; }

NewellStep newell_advance(double x, std::optional<double> lead_x_lagged, const VehicleParams& p, double dt,
                          const LimitSet& lim) {
  double v = lim.v_max;
  if (lead_x_lagged) v = std::clamp((*lead_x_lagged - p.newell_displacement - x) / dt, lim.v_min, lim.v_max);
  return {x + dt * v, v};
}

double hdv_spacing(double x_hdv, const std::vector<double>& cands, double M) {
  double s = M;
  for (double c : cands)
    if (c > x_hdv) s = std::min(s, c - x_hdv);
  return s;
}

void hdv_cutin_rows(LinearConstraintSet& s, const std::string& tag, const Affine& x_i, const Affine& v_i,
                    double x_hat, double v_hat, const Affine& act, const VehicleParams& p, double dt, double M) {
  s.add_row(tag + "_gap", x_i + M * act, Sense::GE, x_hat + p.newell_displacement + p.reaction_time / dt * v_hat);
  s.add_row(tag + "_speed", v_i + M * act, Sense::GE, v_hat);
}

CaccCoefficients cacc_coefficients(double dt, double k1, double k2, double td) {
  const double den = dt + k2 * td;
  if (!(den > 0.0)) throw std::invalid_argument("cacc_coefficients requires dt + k2*t_d > 0");
  return {(dt * (1.0 - k1 * td - k2) + k2 * td) / den, dt * k2 / den, dt * k1 / den};
}

CaccCoefficients cacc_coefficients(const VehicleParams& p, double dt) {
  if (!p.cacc_k1 || !p.cacc_k2 || !p.cacc_time_gap) throw std::invalid_argument("vehicle has no CACC gains");
  return cacc_coefficients(dt, *p.cacc_k1, *p.cacc_k2, *p.cacc_time_gap);
}

double cacc_predict(double v, std::optional<double> v_lead, double spacing, const CaccCoefficients& c,
                    const LimitSet& lim) {
  if (!v_lead) return v;
  return std::clamp(c.A * v + c.B * *v_lead + c.C * spacing, lim.v_min, lim.v_max);
}

double ncav_threshold(double a_tilde, double dt, const CaccCoefficients& c) {
  return a_tilde * dt * (c.B - 0.5) / c.A;
}

void ncav_cutin_rows(LinearConstraintSet& s, const std::string& tag, const Affine& v_i, double v_hat,
                     const Affine& v_prev, const Affine& act, const CaccCoefficients& c, const LimitSet& lim,
                     double dt, double M) {
  const double k = dt * (c.B - 0.5) / c.A;
  s.add_row(tag + "_amin", v_i + M * act, Sense::GE, v_hat + k * lim.a_min);
  // k (v_min - v_prev)/dt
  s.add_row(tag + "_vmin", v_i + (k / dt) * v_prev + M * act, Sense::GE, v_hat + k * lim.v_min / dt);
}

}  // namespace synccav::micro
