#include "synccav/relations.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace synccav::relations {

int eval_lane_membership(double y, const LaneGeometry& geo) {
  if (geo.lanes.empty() || !std::isfinite(y)) throw std::invalid_argument("lateral position outside roadway");
  if (y == geo.lower()) return 0;
  for (int l = 0; l < geo.count(); ++l)
    if (geo.lanes[l].lower_y < y && y <= geo.lanes[l].upper_y) return l;
  throw std::invalid_argument("lateral position " + std::to_string(y) + " outside roadway");
}

std::vector<int> eval_downstream(const Kinematics2D& a, const Kinematics2D& b, const LaneGeometry& geo) {
  std::vector<int> out(geo.count(), 0);
  int la = eval_lane_membership(a.y, geo);
  int lb = eval_lane_membership(b.y, geo);
  if (la == lb && a.x < b.x) out[la] = 1;
  return out;
}

bool FollowingMap::follows(int j, int j2) const {
  for (int l = 0; l < lanes; ++l)
    if (at(j, j2, l)) return true;
  return false;
}

int FollowingMap::leader_of(int j) const {
  for (int j2 = 0; j2 < n; ++j2)
    if (j2 != j && follows(j, j2)) return j2;
  return -1;
}

RelationSnapshot eval_snapshot(const std::vector<Kinematics2D>& st, const LaneGeometry& geo, const CellGrid& grid,
                               int step) {
  RelationSnapshot s;
  const int n = static_cast<int>(st.size());
  const int L = geo.count();
  s.n = n;
  s.lanes = L;
  s.step = step;
  s.lane.resize(n);
  for (int j = 0; j < n; ++j) s.lane[j] = eval_lane_membership(st[j].y, geo);
  s.rho.assign(static_cast<std::size_t>(n) * n * L, 0);
  s.eta.assign(s.rho.size(), 0);
  s.delta.assign(s.rho.size(), 0);
  s.xi.assign(static_cast<std::size_t>(n) * n * n * L, 0);
  auto idx = [&](int j, int j2, int l) { return (static_cast<std::size_t>(j) * n + j2) * L + l; };
  for (int j = 0; j < n; ++j)
    for (int j2 = 0; j2 < n; ++j2) {
      if (j == j2) continue;
      if (s.lane[j] == s.lane[j2]) {
        if (st[j].x < st[j2].x) s.rho[idx(j, j2, s.lane[j])] = 1;
        if (st[j].x == st[j2].x) s.tie_warning = true;
      }
    }
  for (int j = 0; j < n; ++j)
    for (int j2 = 0; j2 < n; ++j2) {
      if (j == j2) continue;
      for (int l = 0; l < L; ++l) {
        int any = 0;
        for (int k = 0; k < n; ++k) {
          if (k == j || k == j2) continue;
          char v = s.rho[idx(j, k, l)] && s.rho[idx(k, j2, l)];
          s.xi[((static_cast<std::size_t>(j) * n + j2) * n + k) * L + l] = v;
          any |= v;
        }
        s.delta[idx(j, j2, l)] = any ? 0 : 1;
        s.eta[idx(j, j2, l)] = (s.rho[idx(j, j2, l)] && !any) ? 1 : 0;
      }
    }
  s.cell.resize(n);
  for (int j = 0; j < n; ++j) s.cell[j] = {s.lane[j], eval_cell(st[j].x, grid)};
  return s;
}

FollowingMap eval_following(const std::vector<Kinematics2D>& states, const LaneGeometry& geo) {
  const int n = static_cast<int>(states.size());
  const int L = geo.count();
  FollowingMap m;
  m.n = n;
  m.lanes = L;
  m.bits.assign(static_cast<std::size_t>(n) * n * L, 0);
  std::vector<int> lane(n);
  for (int j = 0; j < n; ++j) lane[j] = eval_lane_membership(states[j].y, geo);
  for (int j = 0; j < n; ++j)
    for (int j2 = 0; j2 < n; ++j2) {
      if (j == j2 || lane[j] != lane[j2]) continue;
      if (states[j].x == states[j2].x) m.tie_warning = true;
      if (!(states[j].x < states[j2].x)) continue;
      bool between = false;
      for (int k = 0; k < n && !between; ++k) {
        if (k == j || k == j2 || lane[k] != lane[j]) continue;
        between = states[j].x < states[k].x && states[k].x < states[j2].x;
      }
      if (!between) m.bits[(static_cast<std::size_t>(j) * n + j2) * L + lane[j]] = 1;
    }
  return m;
}

int eval_cell(double x, const CellGrid& grid) {
  if (!std::isfinite(x) || x < 0.0 || x > grid.extent())
    throw std::invalid_argument("position " + std::to_string(x) + " outside cell grid");
  if (x == 0.0) return 0;
  int c = static_cast<int>(std::ceil(x / grid.cell_length)) - 1;
  if (c < 0) c = 0;
  if (c >= grid.cells) c = grid.cells - 1;
  // guard against floating error at boundaries
  if (x <= grid.lower(c) && c > 0) --c;
  if (x > grid.upper(c) && c + 1 < grid.cells) ++c;
  return c;
}

CellIndex eval_cell_membership(const Kinematics2D& st, const LaneGeometry& geo, const CellGrid& grid) {
  return {eval_lane_membership(st.y, geo), eval_cell(st.x, grid)};
}

// ---- row families ----

void add_lane_rows(LinearConstraintSet& s, const std::string& tag, const Affine& y, const Affine& gamma,
                   const LaneGeometry& geo, int l, double M) {
  const double lo = geo.lanes[l].lower_y;
  const double hi = geo.lanes[l].upper_y;
  const double eps = l == 0 ? 0.0 : kStrictEps;
  s.add_row(tag + "_lane_hi", y + M * gamma, Sense::LE, hi + M);
  s.add_row(tag + "_lane_lo", y - M * gamma, Sense::GE, lo + eps - M);
}

void add_downstream_rows(LinearConstraintSet& s, const std::string& tag, const Affine& xj, const Affine& xj2,
                         const Affine& gj, const Affine& gj2, const Affine& rho, double M) {
  s.add_row(tag + "_ord1", xj2 - xj - M * rho + M * gj + M * gj2, Sense::LE, 2.0 * M);
  s.add_row(tag + "_ord2", xj2 - xj - (M + kStrictEps) * rho, Sense::GE, -M);
  s.add_row(tag + "_ord3a", rho - gj, Sense::LE, 0.0);
  s.add_row(tag + "_ord3b", rho - gj2, Sense::LE, 0.0);
}

void add_between_rows(LinearConstraintSet& s, const std::string& tag, const Affine& xi, const Affine& rho_jk,
                      const Affine& rho_kj2) {
  s.add_row(tag + "_btw1", xi - rho_jk, Sense::LE, 0.0);
  s.add_row(tag + "_btw2", xi - rho_kj2, Sense::LE, 0.0);
  s.add_row(tag + "_btw3", xi - rho_jk - rho_kj2, Sense::GE, -1.0);
}

void add_following_rows(LinearConstraintSet& s, const std::string& tag, const Affine& eta, const Affine& delta,
                        const Affine& rho, const std::vector<Affine>& xis, double M) {
  Affine sum;
  for (const auto& x : xis) sum += x;
  s.add_row(tag + "_fol1", delta - eta, Sense::GE, 0.0);
  s.add_row(tag + "_fol2", rho - eta, Sense::GE, 0.0);
  s.add_row(tag + "_fol3", eta - rho - delta, Sense::GE, -1.0);
  s.add_row(tag + "_fol4", sum + M * delta, Sense::LE, M);
  s.add_row(tag + "_fol5", sum + delta, Sense::GE, 1.0);
}

void add_interval_rows(LinearConstraintSet& s, const std::string& tag, const Affine& coord, const Affine& phi,
                       double lo, double hi, bool lower_strict, double M) {
  s.add_row(tag + "_hi", coord + M * phi, Sense::LE, hi + M);
  s.add_row(tag + "_lo", coord - M * phi, Sense::GE, lo + (lower_strict ? kStrictEps : 0.0) - M);
}

EncodedRelations encode_relations_bigM(const std::vector<RosterEntry>& roster, const LaneGeometry& geo,
                                       const CellGrid& grid, int horizon, double M) {
  const int n = static_cast<int>(roster.size());
  const int L = geo.count();
  const int C = grid.cells;
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  const double need = std::max({grid.extent(), geo.width(), static_cast<double>(n)}) + kStrictEps;
  if (M < need) throw std::invalid_argument("big-M too small for coordinate ranges (need >= " + std::to_string(need) + ")");

  EncodedRelations e;
  e.n = n;
  e.lanes = L;
  e.cells = C;
  e.horizon = horizon;
  auto& s = e.set;
  s.big_m = M;
  e.x.resize(static_cast<std::size_t>(horizon) * n);
  e.y.resize(e.x.size());
  e.gamma.resize(static_cast<std::size_t>(horizon) * n * L);
  e.rho.assign(static_cast<std::size_t>(horizon) * n * n * L, -1);
  e.delta = e.rho;
  e.eta = e.rho;
  e.xi.assign(static_cast<std::size_t>(horizon) * n * n * n * L, -1);
  e.phi.resize(static_cast<std::size_t>(horizon) * n * L * C);

  auto V = [](int v) { return Affine::var(v); };
  for (int t = 0; t < horizon; ++t) {
    const std::string ts = "_t" + std::to_string(t + 1);
    for (int j = 0; j < n; ++j) {
      const std::string js = std::to_string(roster[j].id);
      e.x[t * n + j] = s.add_continuous("x_" + js + ts, 0.0, grid.extent());
      e.y[t * n + j] = s.add_continuous("y_" + js + ts, geo.lower(), geo.upper());
      for (int l = 0; l < L; ++l)
        e.gamma[(t * n + j) * L + l] =
            s.add_binary("gamma_" + js + "_l" + std::to_string(l + 1) + ts, VarClass::Gamma, roster[j].id, t);
    }
    for (int j = 0; j < n; ++j)
      for (int j2 = 0; j2 < n; ++j2) {
        if (j == j2) continue;
        const std::string ps = std::to_string(roster[j].id) + "_" + std::to_string(roster[j2].id);
        for (int l = 0; l < L; ++l) {
          const std::string ls = "_l" + std::to_string(l + 1) + ts;
          std::size_t k2 = ((static_cast<std::size_t>(t) * n + j) * n + j2) * L + l;
          e.rho[k2] = s.add_binary("rho_" + ps + ls, VarClass::Rho, roster[j].id, t);
          e.eta[k2] = s.add_binary("eta_" + ps + ls, VarClass::Eta, roster[j].id, t);
          e.delta[k2] = s.add_binary("delta_" + ps + ls, VarClass::Aux, roster[j].id, t);
          for (int k = 0; k < n; ++k) {
            if (k == j || k == j2) continue;
            e.xi[(((static_cast<std::size_t>(t) * n + j) * n + j2) * n + k) * L + l] = s.add_binary(
                "xi_" + ps + "_" + std::to_string(roster[k].id) + ls, VarClass::Aux, roster[j].id, t);
          }
        }
      }
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < L; ++l)
        for (int c = 0; c < C; ++c)
          e.phi[((static_cast<std::size_t>(t) * n + j) * L + l) * C + c] =
              s.add_binary("phi_" + std::to_string(roster[j].id) + "_l" + std::to_string(l + 1) + "_c" +
                               std::to_string(c + 1) + ts,
                           VarClass::Phi, roster[j].id, t);

    for (int j = 0; j < n; ++j) {
      const std::string js = std::to_string(roster[j].id) + ts;
      Affine sum;
      for (int l = 0; l < L; ++l) {
        sum += V(e.gamma_var(j, l, t));
        add_lane_rows(s, "gamma_" + js + "_l" + std::to_string(l + 1), V(e.y_var(j, t)), V(e.gamma_var(j, l, t)),
                      geo, l, M);
      }
      s.add_row("sum_gamma_" + js, sum, Sense::EQ, 1.0);
    }
    for (int j = 0; j < n; ++j)
      for (int j2 = 0; j2 < n; ++j2) {
        if (j == j2) continue;
        const std::string ps = std::to_string(roster[j].id) + "_" + std::to_string(roster[j2].id);
        for (int l = 0; l < L; ++l) {
          const std::string tag = ps + "_l" + std::to_string(l + 1) + ts;
          add_downstream_rows(s, "rho_" + tag, V(e.x_var(j, t)), V(e.x_var(j2, t)), V(e.gamma_var(j, l, t)),
                              V(e.gamma_var(j2, l, t)), V(e.rho_var(j, j2, l, t)), M);
          std::vector<Affine> xis;
          for (int k = 0; k < n; ++k) {
            if (k == j || k == j2) continue;
            add_between_rows(s, "xi_" + tag + "_k" + std::to_string(roster[k].id), V(e.xi_var(j, j2, k, l, t)),
                             V(e.rho_var(j, k, l, t)), V(e.rho_var(k, j2, l, t)));
            xis.push_back(V(e.xi_var(j, j2, k, l, t)));
          }
          add_following_rows(s, "eta_" + tag, V(e.eta_var(j, j2, l, t)), V(e.delta_var(j, j2, l, t)),
                             V(e.rho_var(j, j2, l, t)), xis, M);
        }
      }
    for (int j = 0; j < n; ++j) {
      const std::string js = std::to_string(roster[j].id);
      Affine sum;
      for (int l = 0; l < L; ++l)
        for (int c = 0; c < C; ++c) {
          const int pv = e.phi_var(j, l, c, t);
          sum += V(pv);
          const std::string tag = "phi_" + js + "_l" + std::to_string(l + 1) + "_c" + std::to_string(c + 1) + ts;
          add_interval_rows(s, tag + "_x", V(e.x_var(j, t)), V(pv), grid.lower(c), grid.upper(c), c > 0, M);
          if (roster[j].subject) {
            add_interval_rows(s, tag + "_y", V(e.y_var(j, t)), V(pv), geo.lanes[l].lower_y, geo.lanes[l].upper_y,
                              l > 0, M);
          } else {
            s.add_row(tag + "_lane", V(pv) - V(e.gamma_var(j, l, t)), Sense::LE, 0.0);
          }
        }
      s.add_row("sum_phi_" + js + ts, sum, Sense::EQ, 1.0);
    }
  }
  return e;
}

std::vector<double> EncodedRelations::assignment(const std::vector<std::vector<Kinematics2D>>& per_step,
                                                 const LaneGeometry& geo, const CellGrid& grid) const {
  std::vector<double> v(set.vars.size(), 0.0);
  for (int t = 0; t < horizon; ++t) {
    const auto& st = per_step.at(t);
    auto snap = eval_snapshot(st, geo, grid, t + 1);
    for (int j = 0; j < n; ++j) {
      v[x_var(j, t)] = st[j].x;
      v[y_var(j, t)] = st[j].y;
      for (int l = 0; l < lanes; ++l) v[gamma_var(j, l, t)] = snap.gamma(j, l);
      for (int l = 0; l < lanes; ++l)
        for (int c = 0; c < cells; ++c) v[phi_var(j, l, c, t)] = snap.phi(j, l, c);
      for (int j2 = 0; j2 < n; ++j2) {
        if (j == j2) continue;
        for (int l = 0; l < lanes; ++l) {
          v[rho_var(j, j2, l, t)] = snap.rho_at(j, j2, l);
          v[eta_var(j, j2, l, t)] = snap.eta_at(j, j2, l);
          v[delta_var(j, j2, l, t)] = snap.delta_at(j, j2, l);
          for (int k = 0; k < n; ++k)
            if (k != j && k != j2) v[xi_var(j, j2, k, l, t)] = snap.xi_at(j, j2, k, l);
        }
      }
    }
  }
  return v;
}

}  // namespace synccav::relations
