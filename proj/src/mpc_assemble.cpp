#include <algorithm>
#include <cmath>
#include <string>

#include "synccav/micro.hpp"
#include "synccav/mpc.hpp"
#include "synccav/relations.hpp"

namespace synccav::mpc {

namespace {

constexpr double kLaneMargin = 1e-5;  // keeps planned positions off lane edges

// Binary that may have been resolved to a constant during assembly.
struct BVal {
  int var = -1;
  double c = 0.0;
  bool is_const() const { return var < 0; }
  bool can_be(int v) const { return !is_const() || c == v; }
  Affine aff() const { return is_const() ? Affine(c) : Affine::var(var); }
};
BVal constant(double c) { return {-1, c}; }

std::string sid(int i) { return "s" + std::to_string(i + 1); }
std::string tt(int t) { return "_t" + std::to_string(t); }

struct Reach {
  std::vector<double> xlo, xhi, vlo, vhi, ylo, yhi;
};

Reach reach(const Kinematics2D& s0, const LimitSet& L, double dt, int T) {
  Reach r;
  double xl = s0.x, xh = s0.x, vl = s0.vx, vh = s0.vx;
  double yl = s0.y, yh = s0.y, wl = s0.vy, wh = s0.vy;
  for (int t = 0; t <= T; ++t) {
    r.xlo.push_back(xl);
    r.xhi.push_back(xh);
    r.vlo.push_back(vl);
    r.vhi.push_back(vh);
    r.ylo.push_back(yl);
    r.yhi.push_back(yh);
    double ul = std::max(L.a_min, (L.v_min - vl) / dt), uh = std::min(L.a_max, (L.v_max - vh) / dt);
    xl += dt * vl + 0.5 * dt * dt * ul;
    vl += dt * ul;
    xh += dt * vh + 0.5 * dt * dt * uh;
    vh += dt * uh;
    double al = std::max(-L.ay_max, (-L.vy_max - wl) / dt), ah = std::min(L.ay_max, (L.vy_max - wh) / dt);
    yl += dt * wl + 0.5 * dt * dt * al;
    wl += dt * al;
    yh += dt * wh + 0.5 * dt * dt * ah;
    wh += dt * ah;
  }
  return r;
}

}  // namespace

MpcProblem assemble_constraints(const Snapshot& s, const MpcOptions& opt) {
  MpcProblem p;
  p.snap = s;
  p.phase = s.phase;
  const int T = p.T = s.horizon;
  const double M = s.big_m;
  const double dt = s.dt;
  const LimitSet& L = s.limits;
  const LaneGeometry& geo = s.geometry;
  const int NL = geo.count();
  const int NK = static_cast<int>(s.neighbors.size());
  if (T < 1) throw std::invalid_argument("horizon must be at least one step");
  auto& cs = p.cs;
  cs.big_m = M;

  auto add_bin = [&](const std::string& name, VarClass cls, int k0, int k1, BinMeta m) {
    int v = cs.add_binary(name, cls, k0, k1);
    p.meta.resize(cs.vars.size());
    p.meta[v] = m;
    return BVal{v, 0.0};
  };

  if (opt.check_initial) {
    for (int i = 0; i < 2; ++i) {
      const auto& si = s.subject[i];
      int li = relations::eval_lane_membership(si.y, geo);
      double best = 1e300;
      int who = -1;
      const auto& so = s.subject[1 - i];
      if (relations::eval_lane_membership(so.y, geo) == li && so.x > si.x) best = so.x, who = s.subject_id[1 - i];
      for (const auto& n : s.neighbors)
        if (n.lane == li && n.x[0] > si.x && n.x[0] < best) best = n.x[0], who = n.id;
      if (who >= 0 && best - si.x < micro::safety_gap(si.vx, s.subject_params[i], L) - opt.feas_tol)
        throw InfeasibleAtStart("subject " + std::to_string(s.subject_id[i]) +
                                " starts inside its safety gap behind vehicle " + std::to_string(who));
    }
  }

  // controls
  const char* axis[2] = {"x", "y"};
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a)
      for (int k = 0; k < T; ++k)
        cs.add_continuous("u" + std::string(axis[a]) + "_" + sid(i) + "_" + std::to_string(k),
                          a == 0 ? L.a_min : -L.ay_max, a == 0 ? L.a_max : L.ay_max);
  p.n_u = 4 * T;
  if (s.phase == Phase::Platoon)
    for (int t = 1; t <= T; ++t) cs.add_continuous("z" + tt(t), 0.0, 1e3);
  p.n_cont = static_cast<int>(cs.vars.size());
  p.meta.resize(cs.vars.size());

  for (int i = 0; i < 2; ++i) {
    const auto& s0 = s.subject[i];
    p.x[i] = {Affine(s0.x)};
    p.vx[i] = {Affine(s0.vx)};
    p.y[i] = {Affine(s0.y)};
    p.vy[i] = {Affine(s0.vy)};
    for (int k = 0; k < T; ++k) {
      Affine ux = Affine::var(p.u_index(i, 0, k)), uy = Affine::var(p.u_index(i, 1, k));
      p.x[i].push_back(p.x[i][k] + dt * p.vx[i][k] + (0.5 * dt * dt) * ux);
      p.vx[i].push_back(p.vx[i][k] + dt * ux);
      p.y[i].push_back(p.y[i][k] + dt * p.vy[i][k] + (0.5 * dt * dt) * uy);
      p.vy[i].push_back(p.vy[i][k] + dt * uy);
    }
  }

  Reach R[2] = {reach(s.subject[0], L, dt, T), reach(s.subject[1], L, dt, T)};
  auto sg_min = [&](int i) { return s.subject_params[i].length + s.subject_params[i].reaction_time * L.v_min; };

  // reachable lanes
  std::vector<std::vector<std::vector<char>>> lane_ok(2, std::vector<std::vector<char>>(T + 1, std::vector<char>(NL, 0)));
  for (int i = 0; i < 2; ++i)
    for (int t = 1; t <= T; ++t)
      for (int l = 0; l < NL; ++l) {
        double lo = geo.lanes[l].lower_y, hi = geo.lanes[l].upper_y;
        lane_ok[i][t][l] = R[i].yhi[t] >= lo && R[i].ylo[t] <= hi && R[i].yhi[t] >= geo.lower() &&
                           R[i].ylo[t] <= geo.upper();
      }

  // order of each subject against each neighbor: 0 ahead, 1 behind
  std::vector<std::vector<std::vector<char>>> can_behind(2, std::vector<std::vector<char>>(NK, std::vector<char>(T + 1))),
      can_ahead = can_behind;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < NK; ++k)
      for (int t = 1; t <= T; ++t) {
        double xh = s.neighbors[k].x[t];
        can_behind[i][k][t] = R[i].xlo[t] <= xh - sg_min(i);
        can_ahead[i][k][t] = R[i].xhi[t] >= xh + s.neighbors[k].params.length;
        if (!can_behind[i][k][t] && !can_ahead[i][k][t]) lane_ok[i][t][s.neighbors[k].lane] = 0;
      }

  // lane indicators and lateral rows
  std::vector<std::vector<std::vector<BVal>>> gam(2, std::vector<std::vector<BVal>>(T + 1, std::vector<BVal>(NL)));
  for (int i = 0; i < 2; ++i) {
    for (int t = 1; t <= T; ++t) {
      std::vector<int> ok;
      for (int l = 0; l < NL; ++l)
        if (lane_ok[i][t][l]) ok.push_back(l);
      if (ok.empty()) {
        p.trivially_infeasible = true;
        p.infeasible_reason = "subject " + std::to_string(s.subject_id[i]) + " has no admissible lane at step " +
                              std::to_string(t);
      }
      Affine sum;
      p.fixed_lane[i].resize(T + 1, -1);
      if (ok.size() == 1) p.fixed_lane[i][t] = ok[0];
      for (int l = 0; l < NL; ++l) {
        if (!lane_ok[i][t][l]) {
          gam[i][t][l] = constant(0);
          continue;
        }
        if (ok.size() == 1) {
          gam[i][t][l] = constant(1);
        } else {
          BinMeta m{BinKind::Gamma, i, -1, l, t};
          gam[i][t][l] = add_bin("gamma_" + sid(i) + "_l" + std::to_string(l + 1) + tt(t), VarClass::Gamma,
                                 s.subject_id[i], t * 16 + l, m);
        }
        double hi = l == NL - 1 ? geo.lanes[l].upper_y : geo.lanes[l].upper_y - kLaneMargin;
        double lo = l == 0 ? geo.lanes[l].lower_y : geo.lanes[l].lower_y + kLaneMargin;
        std::string tag = "lane_" + sid(i) + "_l" + std::to_string(l + 1) + tt(t);
        Affine g = gam[i][t][l].aff();
        cs.add_row(tag + "_hi", p.y[i][t] + M * g, Sense::LE, hi + M);
        cs.add_row(tag + "_lo", p.y[i][t] - M * g, Sense::GE, lo - M);
        sum += g;
      }
      if (ok.size() > 1) cs.add_row("gsum_" + sid(i) + tt(t), sum, Sense::EQ, 1.0);
      std::string tag = sid(i) + tt(t);
      cs.add_row("vmin_" + tag, p.vx[i][t], Sense::GE, L.v_min);
      cs.add_row("vmax_" + tag, p.vx[i][t], Sense::LE, L.v_max);
      cs.add_row("vymin_" + tag, p.vy[i][t], Sense::GE, -L.vy_max);
      cs.add_row("vymax_" + tag, p.vy[i][t], Sense::LE, L.vy_max);
      cs.add_row("ymin_" + tag, p.y[i][t], Sense::GE, geo.lower() + kLaneMargin);
      cs.add_row("ymax_" + tag, p.y[i][t], Sense::LE, geo.upper() - kLaneMargin);
    }
    cs.add_row("vyT_" + sid(i), p.vy[i][T], Sense::EQ, 0.0);
  }

  // order bits and subject-neighbor safety
  std::vector<std::vector<std::vector<BVal>>> ord(2, std::vector<std::vector<BVal>>(NK, std::vector<BVal>(T + 1)));
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < NK; ++k) {
      const auto& nb = s.neighbors[k];
      for (int t = 1; t <= T; ++t) {
        const double xh = nb.x[t];
        const Affine& g = gam[i][t][nb.lane].aff();
        if (!lane_ok[i][t][nb.lane]) {
          ord[i][k][t] = constant(0.5 * (R[i].xlo[t] + R[i].xhi[t]) < xh ? 1 : 0);
          continue;
        }
        bool cb = can_behind[i][k][t], ca = can_ahead[i][k][t];
        if (cb && ca) {
          BinMeta m{BinKind::Order, i, k, nb.lane, t};
          ord[i][k][t] = add_bin("b_" + sid(i) + "_n" + std::to_string(nb.id) + tt(t), VarClass::Rho, s.subject_id[i],
                                 t * 100000 + nb.id, m);
        } else {
          ord[i][k][t] = constant(cb ? 1 : 0);
        }
        const BVal& b = ord[i][k][t];
        std::string tag = sid(i) + "_n" + std::to_string(nb.id) + tt(t);
        if (cb && xh - R[i].xhi[t] < micro::safety_gap(R[i].vhi[t], s.subject_params[i], L) + 1e-9)
          micro::emit_subject_safety_constraints(cs, "safe_" + tag, p.x[i][t], p.vx[i][t], Affine(xh),
                                                 (Affine(1.0) - g) + (Affine(1.0) - b.aff()), s.subject_params[i], L,
                                                 M);
        if (ca && R[i].xlo[t] - xh < nb.params.length + 1e-9)
          cs.add_row("rear_" + tag, p.x[i][t] - xh + M * ((Affine(1.0) - g) + b.aff()), Sense::GE, nb.params.length);
      }
    }

  // subject pair
  std::vector<BVal> pair(T + 1);
  for (int t = 1; t <= T; ++t) {
    bool c1 = R[0].xlo[t] - R[1].xhi[t] <= -sg_min(0);  // 1 can follow 2
    bool c2 = R[1].xlo[t] - R[0].xhi[t] <= -sg_min(1);
    if (s.phase == Phase::Platoon) {
      c1 = c1 && s.follower == 0;
      c2 = c2 && s.follower == 1;
      if (!c1 && !c2) {
        p.trivially_infeasible = true;
        p.infeasible_reason = "platoon order cannot hold at step " + std::to_string(t);
      }
    }
    if (c1 && c2) {
      BinMeta m{BinKind::Pair, -1, -1, -1, t};
      pair[t] = add_bin("b12" + tt(t), VarClass::Rho, std::min(s.subject_id[0], s.subject_id[1]), t * 100000, m);
    } else {
      pair[t] = constant(c1 ? 1 : 0);
    }
    for (int l = 0; l < NL; ++l) {
      if (!lane_ok[0][t][l] || !lane_ok[1][t][l]) continue;
      Affine g1 = gam[0][t][l].aff(), g2 = gam[1][t][l].aff();
      std::string tag = "_l" + std::to_string(l + 1) + tt(t);
      if (!c1 && !c2) {
        cs.add_row("apart" + tag, g1 + g2, Sense::LE, 1.0);
        continue;
      }
      Affine both = (Affine(1.0) - g1) + (Affine(1.0) - g2);
      if (c1)
        micro::emit_subject_safety_constraints(cs, "pair_12" + tag, p.x[0][t], p.vx[0][t], p.x[1][t],
                                               both + (Affine(1.0) - pair[t].aff()), s.subject_params[0], L, M);
      if (c2)
        micro::emit_subject_safety_constraints(cs, "pair_21" + tag, p.x[1][t], p.vx[1][t], p.x[0][t],
                                               both + pair[t].aff(), s.subject_params[1], L, M);
    }
  }

  // cut-in in front of neighbors
  auto ahead_of = [&](int k, int t) {
    int best = -1;
    for (int j = 0; j < NK; ++j) {
      if (j == k || s.neighbors[j].lane != s.neighbors[k].lane || s.neighbors[j].x[t] <= s.neighbors[k].x[t]) continue;
      if (best < 0 || s.neighbors[j].x[t] < s.neighbors[best].x[t]) best = j;
    }
    return best;
  };
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < NK; ++k) {
      const auto& nb = s.neighbors[k];
      BVal prev;
      {
        int k2 = ahead_of(k, 0);
        const auto& s0 = s.subject[i];
        bool in = relations::eval_lane_membership(s0.y, geo) == nb.lane && s0.x >= nb.x[0] &&
                  (k2 < 0 || s0.x < s.neighbors[k2].x[0]);
        prev = constant(in ? 1 : 0);
      }
      for (int t = 1; t <= T; ++t) {
        BVal c = constant(0);
        if (lane_ok[i][t][nb.lane]) {
          int k2 = ahead_of(k, t);
          BVal g = gam[i][t][nb.lane], b = ord[i][k][t], b2 = k2 < 0 ? constant(1) : ord[i][k2][t];
          if (g.can_be(1) && b.can_be(0) && b2.can_be(1)) {
            if (g.is_const() && b.is_const() && b2.is_const()) {
              c = constant(1);
            } else {
              BinMeta m{BinKind::CutIn, i, k, nb.lane, t};
              std::string tag = "c_" + sid(i) + "_n" + std::to_string(nb.id) + tt(t);
              c = add_bin(tag, VarClass::Aux, s.subject_id[i], t * 100000 + nb.id, m);
              cs.add_row(tag + "_and1", c.aff() - g.aff(), Sense::LE, 0.0);
              cs.add_row(tag + "_and2", c.aff() + b.aff(), Sense::LE, 1.0);
              cs.add_row(tag + "_and3", c.aff() - b2.aff(), Sense::LE, 0.0);
              cs.add_row(tag + "_and4", c.aff() - g.aff() + b.aff() - b2.aff(), Sense::GE, -1.0);
            }
          }
        }
        if (c.can_be(1) && prev.can_be(0)) {
          Affine act = Affine(1.0) - c.aff() + prev.aff();
          std::string tag = "cut_" + sid(i) + "_n" + std::to_string(nb.id) + tt(t);
          if (nb.cls == VehicleClass::Hdv) {
            micro::hdv_cutin_rows(cs, tag, p.x[i][t], p.vx[i][t], nb.x[t], nb.v[t], act, nb.params, dt, M);
          } else {
            auto cc = micro::cacc_coefficients(nb.params, dt);
            micro::ncav_cutin_rows(cs, tag, p.vx[i][t], nb.v[t], p.vx[i][t - 1], act, cc, L, dt, M);
          }
        }
        prev = c;
      }
    }

  // following relation between the subjects
  for (int t = 1; t <= T; ++t) {
    Affine sum;
    int nvars = 0;
    for (int l = 0; l < NL; ++l) {
      if (!lane_ok[0][t][l] || !lane_ok[1][t][l]) continue;
      for (int dir = 0; dir < 2; ++dir) {
        if (s.phase == Phase::Platoon && dir != s.follower) continue;
        int f = dir, ld = 1 - dir;
        BVal order = pair[t];
        if (!order.can_be(dir == 0 ? 1 : 0)) continue;
        BinMeta m{BinKind::Follow, -1, -1, l, t, dir};
        std::string tag = "eta_" + sid(f) + sid(ld).substr(1) + "_l" + std::to_string(l + 1) + tt(t);
        BVal e = add_bin(tag, VarClass::Eta, std::min(s.subject_id[0], s.subject_id[1]), t * 16 + l * 2 + dir, m);
        cs.add_row(tag + "_g1", e.aff() - gam[0][t][l].aff(), Sense::LE, 0.0);
        cs.add_row(tag + "_g2", e.aff() - gam[1][t][l].aff(), Sense::LE, 0.0);
        Affine ordf = dir == 0 ? order.aff() : Affine(1.0) - order.aff();
        cs.add_row(tag + "_ord", e.aff() - ordf, Sense::LE, 0.0);
        for (int k = 0; k < NK; ++k) {
          if (s.neighbors[k].lane != l) continue;
          const BVal &bf = ord[f][k][t], &bl = ord[ld][k][t];
          if (bf.is_const() && bl.is_const() && 1 - bf.c + bl.c >= 1) continue;
          cs.add_row(tag + "_n" + std::to_string(s.neighbors[k].id), e.aff() + bf.aff() - bl.aff(), Sense::LE, 1.0);
        }
        sum += e.aff();
        ++nvars;
      }
    }
    if (s.phase == Phase::Platoon) {
      if (nvars == 0) {
        p.trivially_infeasible = true;
        p.infeasible_reason = "no common lane for the platoon at step " + std::to_string(t);
      } else {
        cs.add_row("same_lane" + tt(t), sum, Sense::EQ, 1.0);
      }
    } else if (nvars > 1) {
      cs.add_row("eta_once" + tt(t), sum, Sense::LE, 1.0);
    }
  }

  // spacing deviation in the platoon phase
  if (s.phase == Phase::Platoon) {
    int f = s.follower, ld = 1 - f;
    for (int t = 1; t <= T; ++t) {
      Affine dev = (1.0 / s.desired_spacing) * (p.x[ld][t] - p.x[f][t] - s.desired_spacing);
      Affine z = Affine::var(p.z_index(t));
      cs.add_row("zpos" + tt(t), z - dev, Sense::GE, 0.0);
      cs.add_row("zneg" + tt(t), z + dev, Sense::GE, 0.0);
    }
  }
  p.meta.resize(cs.vars.size());
  p.bin_obj.assign(cs.vars.size(), 0.0);
  p.H = Eigen::MatrixXd::Zero(p.n_cont, p.n_cont);
  p.g = Eigen::VectorXd::Zero(p.n_cont);
  return p;
}

namespace {

Eigen::VectorXd dense(const Affine& a, int n) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (const auto& t : a.terms) v(t.var) += t.coef;
  return v;
}

// adds 1/2 q (a'c + k)^2
void add_square(MpcProblem& p, const Affine& e, double q) {
  Eigen::VectorXd a = dense(e, p.n_cont);
  p.H += q * a * a.transpose();
  p.g += q * e.constant * a;
  p.c0 += 0.5 * q * e.constant * e.constant;
}

}  // namespace

void assemble_objective(MpcProblem& p, Phase phase, const weights::WeightConfig& w) {
  w.validate();
  if (phase != p.snap.phase) throw std::invalid_argument("objective phase differs from the assembled problem");
  p.weights = w;
  p.phase = phase;
  const int n = p.n_cont;
  const auto& L = p.snap.limits;
  p.H = Eigen::MatrixXd::Zero(n, n);
  p.g = Eigen::VectorXd::Zero(n);
  p.c0 = 0.0;
  p.bin_obj.assign(p.cs.vars.size(), 0.0);
  for (int k = 0; k < p.n_u; ++k) p.H(k, k) += w.q_u;
  const double qw[2] = {w.q_w1, w.q_w2};
  for (int i = 0; i < 2; ++i)
    for (int t = 1; t <= p.T; ++t) add_square(p, p.vx[i][t] - L.v_max, qw[i] / w.w_norm);
  if (phase == Phase::Platoon) {
    for (int t = 1; t <= p.T; ++t) {
      add_square(p, p.vx[0][t] - p.vx[1][t], w.q_v / w.w_norm);
      p.g(p.z_index(t)) += w.q_z;
    }
  }
  const int NL = p.snap.geometry.count();
  const bool flow = !p.snap.flow_penalty.empty();
  for (std::size_t v = 0; v < p.meta.size(); ++v) {
    const auto& m = p.meta[v];
    if (m.kind == BinKind::Follow && phase == Phase::CatchUp) p.bin_obj[v] = -0.5 * w.q_eta;
    if (m.kind == BinKind::Gamma && flow)
      p.bin_obj[v] = 0.5 * w.q_y * p.snap.flow_penalty[(m.subject * p.T + m.step - 1) * NL + m.lane];
  }
  if (flow)
    for (int i = 0; i < 2; ++i)
      for (int t = 1; t <= p.T; ++t)
        if (int l = p.fixed_lane[i][t]; l >= 0) p.c0 += 0.5 * w.q_y * p.snap.flow_penalty[(i * p.T + t - 1) * NL + l];
  p.H += 1e-8 * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace synccav::mpc
