#pragma once

#include <string>

#include "synccav/types.hpp"

namespace synccav::weights {

// Objective weights for one MPC solve. Immutable for the whole horizon.
struct WeightConfig {
  double q_u = 0.1;
  double q_w1 = 0.4;
  double q_w2 = 0.4;
  double q_y = 0.1;
  double q_eta = 0.4;
  double q_v = 0.1;
  double q_z = 0.35;
  double w_norm = 0.0;  // (v_max - v_min)^2, set by the caller
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double xi_max = 10.0;

  void validate() const;  // throws on negative weights or non-positive normalizers
};

struct LossReport {
  double dj_w1 = 0.0;
  double dj_w2 = 0.0;
  double dj_eta = 0.0;
  double dj_z = 0.0;
  double xi1 = 0.0;
  double xi2 = 0.0;
  double q_eta = 0.0;
  double q_z = 0.0;
};

enum class Strategy { Adaptive, S1, S2, S3 };

Strategy strategy_from_string(const std::string& s);
const char* to_string(Strategy s);

// (v_max t dt - displacement)/(v_max t dt), clamped to [0, 1]. Throws for t = 0.
double loss_w(double displacement, int t, double dt, double v_max);
double loss_eta(double y1, double y2, const LaneGeometry& geo);
double loss_z(double x1, double x2, double desired_spacing);

// xi = clamp(target/loss_w, 0, xi_max); a zero loss_w maps to xi_max.
double scaling(double target, double dj_w, double xi_max);

// Fills q_eta (q1) or q_z (q2) from the losses; other weights are copied from base.
WeightConfig adapt_weights(Phase phase, LossReport& losses, const WeightConfig& base);

// Table of fixed strategies. Adaptive returns the base weights used before adaptation.
WeightConfig fixed_strategy(Strategy s, Phase phase, const WeightBase& base, double w_norm);

}  // namespace synccav::weights
