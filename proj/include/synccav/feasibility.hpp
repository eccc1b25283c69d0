#pragma once

#include <string>
#include <vector>

#include "synccav/micro.hpp"
#include "synccav/types.hpp"

namespace synccav::guard {

// tau_bar = (-(v_min - 5a) - sqrt((v_min - 5a)^2 - 24 a d)) / (2a). Throws on a negative discriminant or a >= 0.
double reaction_time_bound(double v_min, double a_min, double d);
// Root of 6 a tau^2 + v_min tau + d = 0 implied by the spacing recursion at n = 5.
double reaction_time_bound_recursion(double v_min, double a_min, double d);

struct Threshold {
  double value = 0.0;
  bool applicable = true;  // false when B <= 1/2
};

// a~ dt (B - 1/2)/A.
Threshold cutin_speed_threshold(double a_tilde, double dt, const micro::CaccCoefficients& c);
// a~ = max(a_min, (v_min - v_prev)/dt)
double a_tilde(double v_prev, const LimitSet& lim, double dt);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool empty() const { return lo > hi; }
};

// Admissible longitudinal control for a follower at speed v whose Newell-predicted leader drives at
// v_lead_now then v_lead_next, with phi_hat the current surplus over the safety gap.
// Assumes the follower's reaction time equals dt.
Interval admissible_interval(double v, double phi_hat, double v_lead_now, double v_lead_next, const LimitSet& lim,
                             double dt);

// Surplus gap - safety_gap(v).
double phi_hat(double gap, double v, const VehicleParams& p, const LimitSet& lim);

// Spacing s(t + n k) for n = 0..n_max under a held control u, by stepping the epoch equations with x_hdv(0) = 0,
// v_hdv(0) = v0, and the subject at x = s0, v = v0.
std::vector<double> spacing_recursion(double s0, double v0, double u, double tau, double d, int n_max);
// Tabulated closed forms for n = 0..6.
std::vector<double> spacing_closed_form(double s0, double v0, double u, double tau, double d);

struct TauCheck {
  int id = 0;
  double tau = 0.0;
  double bound = 0.0;            // closed form
  double bound_recursion = 0.0;  // from s(5k) >= 0
  bool ok = false;
};

struct SpeedCheck {
  int id = 0;
  double v = 0.0;
  bool ok = false;
};

struct CutinCheck {
  int follower = 0;  // n-CAV id
  int leader = 0;    // subject id
  double relative = 0.0;  // v_subject - v_ncav
  double threshold = 0.0;
  bool applicable = true;
  bool ok = false;
};

struct FeasibilityReport {
  bool condition_i = true;
  std::vector<SpeedCheck> condition_ii;
  std::vector<TauCheck> condition_iii;
  std::vector<CutinCheck> condition_iv;
  bool overall = true;
};

// prev_vx: speeds at the previous step aligned with `vehicles` (empty: current speeds are used for a~).
FeasibilityReport check_theorem1(const std::vector<Vehicle>& vehicles, const LaneGeometry& geo, const LimitSet& lim,
                                 double dt, bool prior_feasible, const std::vector<double>& prev_vx = {});

std::string report_summary(const FeasibilityReport& r);

}  // namespace synccav::guard
