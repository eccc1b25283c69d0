#pragma once

#include <optional>
#include <string>
#include <vector>

#include "synccav/linear.hpp"
#include "synccav/types.hpp"

namespace synccav::micro {

// Double integrator, applied per axis.
Kinematics2D step_subject(const Kinematics2D& s, const ControlInput2D& u, double dt);

// Minimum leading gap L + tau*v - (v - v_min)^2 / (2 a_min). Throws if a_min >= 0.
double safety_gap(double v_follower, const VehicleParams& p, const LimitSet& lim);

// Safety row  x_lead - x_follow >= safety_gap(v_follow) - M*act.
// `act` is 0 when the pair is selected (e.g. 3 - gamma_i - gamma_j - rho) and >= 1 otherwise.
void emit_subject_safety_constraints(LinearConstraintSet& s, const std::string& tag, const Affine& x_follow,
                                     const Affine& v_follow, const Affine& x_lead, const Affine& act,
                                     const VehicleParams& p, const LimitSet& lim, double M);

// Newell speed at t+k from spacing s: clamp((dt/tau)(s - d), v_min, v_max).
double newell_predict(double spacing, const VehicleParams& p, double dt, const LimitSet& lim);
// Epoch position update x + tau * v.
double newell_position(double x, double v, double tau, double dt);

// Per-step Newell trajectory shift used by the plant and by the predictor:
// x(t+1) = x(t) + dt*clamp((x_lead(t+1-k) - d - x(t))/dt, v_min, v_max).
// Without a leader the vehicle runs at v_max. Returns the new position and the realized speed.
struct NewellStep {
  double x;
  double v;
};
NewellStep newell_advance(double x, std::optional<double> lead_x_lagged, const VehicleParams& p, double dt,
                          const LimitSet& lim);

// Spacing of an HDV to its effective leader: min over downstream candidates in its lane, else M.
// `candidates` holds the positions of the frozen leader and the subject CAVs that are downstream in the HDV lane.
double hdv_spacing(double x_hdv, const std::vector<double>& downstream_candidates, double M);

// Cut-in rows in front of an HDV, active when act = 1 - eta(t) + eta(t-1) is 0:
//   x_i - x_hat >= d + (tau/dt) v_hat - M*act,   v_i - v_hat >= -M*act.
void hdv_cutin_rows(LinearConstraintSet& s, const std::string& tag, const Affine& x_i, const Affine& v_i,
                    double x_hat, double v_hat, const Affine& act, const VehicleParams& p, double dt, double M);

struct CaccCoefficients {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
};

// Literal value printed alongside the worked threshold example; the formula gives 0.1806.
inline constexpr double kReportedCaccA = 0.1836;

CaccCoefficients cacc_coefficients(double dt, double k1, double k2, double time_gap);
CaccCoefficients cacc_coefficients(const VehicleParams& p, double dt);

// v' = clamp(A v + B v_lead + C s, v_min, v_max); holds speed without a leader.
double cacc_predict(double v, std::optional<double> v_lead, double spacing, const CaccCoefficients& c,
                    const LimitSet& lim);

// Threshold a*dt*(B - 1/2)/A.
double ncav_threshold(double a_tilde, double dt, const CaccCoefficients& c);

// Cut-in rows in front of an n-CAV, active when act = 0:
//   v_i - v_hat >= a~ dt (B - 1/2)/A - M*act with a~ = max(a_min, (v_min - v_prev)/dt),
// emitted as one row per branch of the max.
void ncav_cutin_rows(LinearConstraintSet& s, const std::string& tag, const Affine& v_i, double v_hat,
                     const Affine& v_prev, const Affine& act, const CaccCoefficients& c, const LimitSet& lim,
                     double dt, double M);

}  // namespace synccav::micro
