#include "synccav/weights.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace synccav::weights {

void WeightConfig::validate() const {
  for (double q : {q_u, q_w1, q_w2, q_y, q_eta, q_v, q_z, alpha1, alpha2})
    if (!(q >= 0.0) || !std::isfinite(q)) throw std::invalid_argument("weights must be finite and nonnegative");
  if (!(w_norm > 0.0)) throw std::invalid_argument("speed normalizer must be positive");
  if (!(xi_max > 0.0)) throw std::invalid_argument("xi_max must be positive");
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "adaptive") return Strategy::Adaptive;
  if (s == "s1" || s == "S1") return Strategy::S1;
  if (s == "s2" || s == "S2") return Strategy::S2;
  if (s == "s3" || s == "S3") return Strategy::S3;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Adaptive: return "adaptive";
    case Strategy::S1: return "s1";
    case Strategy::S2: return "s2";
    case Strategy::S3: return "s3";
  }
  return "?";
}

double loss_w(double displacement, int t, double dt, double v_max) {
  if (t <= 0) throw std::invalid_argument("loss_w undefined at t = 0");
  const double ref = v_max * t * dt;
  return std::clamp((ref - displacement) / ref, 0.0, 1.0);
}

double loss_eta(double y1, double y2, const LaneGeometry& geo) { return std::abs(y1 - y2) / geo.width(); }

double loss_z(double x1, double x2, double d) {
  if (!(d > 0.0)) throw std::invalid_argument("desired spacing must be positive");
  return std::abs(x2 - x1 - d) / d;
}

double scaling(double target, double dj_w, double xi_max) {
  if (dj_w <= 0.0) return xi_max;
  const double xi = target / dj_w;
  if (std::isnan(xi)) return 0.0;
  return std::clamp(xi, 0.0, xi_max);
}

WeightConfig adapt_weights(Phase phase, LossReport& L, const WeightConfig& base) {
  WeightConfig w = base;
  const double target = phase == Phase::CatchUp ? L.dj_eta : L.dj_z;
  L.xi1 = scaling(target, L.dj_w1, base.xi_max);
  L.xi2 = scaling(target, L.dj_w2, base.xi_max);
  const double q = base.alpha1 * base.q_w1 * L.xi1 + base.alpha2 * base.q_w2 * L.xi2;
  if (phase == Phase::CatchUp) {
    w.q_eta = q;
    L.q_eta = q;
    L.q_z = w.q_z;
  } else {
    w.q_z = q;
    L.q_z = q;
    L.q_eta = w.q_eta;
  }
  return w;
}

WeightConfig fixed_strategy(Strategy s, Phase phase, const WeightBase& base, double w_norm) {
  WeightConfig w;
  w.q_u = base.q_u;
  w.q_v = base.q_v;
  w.q_y = base.q_y;
  w.alpha1 = base.alpha1;
  w.alpha2 = base.alpha2;
  w.xi_max = base.xi_max;
  w.w_norm = w_norm;
  // {q_eta, q_w} for q1 and {q_z, q_w} for q2
  double a1 = 0.40, b1 = 0.40, a2 = 0.35, b2 = 0.35;
  switch (s) {
    case Strategy::S1:
    case Strategy::Adaptive: break;
    case Strategy::S2: b1 = 0.20, b2 = 0.15; break;
    case Strategy::S3: a1 = 0.20, a2 = 0.15; break;
  }
  w.q_eta = a1;
  w.q_z = a2;
  w.q_w1 = w.q_w2 = phase == Phase::CatchUp ? b1 : b2;
  return w;
}

}  // namespace synccav::weights
