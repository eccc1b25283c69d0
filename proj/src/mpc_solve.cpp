#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <queue>
#include <sstream>

#include "synccav/micro.hpp"
#include "synccav/mpc.hpp"
#include "synccav/qp.hpp"
#include "synccav/relations.hpp"

namespace synccav::mpc {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Feasible: return "Feasible";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::TimeLimit: return "TimeLimit";
  }
  return "?";
}

std::array<std::vector<Kinematics2D>, 2> trajectory(const Snapshot& s, const Plan& u) {
  std::array<std::vector<Kinematics2D>, 2> out;
  for (int i = 0; i < 2; ++i) {
    out[i].push_back(s.subject[i]);
    for (const auto& c : u[i]) out[i].push_back(micro::step_subject(out[i].back(), c, s.dt));
  }
  return out;
}

Breakdown evaluate(const MpcProblem& p, const std::vector<double>& v) {
  Breakdown b;
  const auto& w = p.weights;
  const auto& L = p.snap.limits;
  for (int k = 0; k < p.n_u; ++k) b.J_u += 0.5 * w.q_u * v[k] * v[k];
  const double qw[2] = {w.q_w1, w.q_w2};
  for (int i = 0; i < 2; ++i)
    for (int t = 1; t <= p.T; ++t) {
      double e = p.vx[i][t].eval(v) - L.v_max;
      b.J_w += 0.5 * qw[i] / w.w_norm * e * e;
    }
  const int NL = p.snap.geometry.count();
  if (p.phase == Phase::Platoon) {
    int f = p.snap.follower, ld = 1 - f;
    for (int t = 1; t <= p.T; ++t) {
      double dv = p.vx[0][t].eval(v) - p.vx[1][t].eval(v);
      b.J_v += 0.5 * w.q_v / w.w_norm * dv * dv;
      double dev = p.x[ld][t].eval(v) - p.x[f][t].eval(v) - p.snap.desired_spacing;
      b.J_z += w.q_z * std::abs(dev) / p.snap.desired_spacing;
    }
  }
  for (std::size_t k = 0; k < p.meta.size(); ++k) {
    const auto& m = p.meta[k];
    if (m.kind == BinKind::Follow && p.phase == Phase::CatchUp) b.J_eta += 0.5 * w.q_eta * v[k];
    if (m.kind == BinKind::Gamma && !p.snap.flow_penalty.empty())
      b.J_y -= 0.5 * w.q_y * p.snap.flow_penalty[(m.subject * p.T + m.step - 1) * NL + m.lane] * v[k];
  }
  if (!p.snap.flow_penalty.empty())
    for (int i = 0; i < 2; ++i)
      for (int t = 1; t <= p.T; ++t)
        if (int l = p.fixed_lane[i][t]; l >= 0)
          b.J_y -= 0.5 * w.q_y * p.snap.flow_penalty[(i * p.T + t - 1) * NL + l];
  return b;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

// Row in >= form: a'c + sum(bins) + qcoef (qa'c + qc)^2 >= rhs (== when eq).
struct CRow {
  int id = 0;
  bool eq = false;
  VectorXd a;
  std::vector<std::pair<int, double>> bins;
  double rhs = 0.0;
  bool quad = false;
  VectorXd qa;
  double qc = 0.0, qcoef = 0.0;
  double cont_min = 0.0;
};

struct Compiled {
  int n = 0;
  std::vector<CRow> mixed, pure, cont_eq;
  VectorXd lb, ub;
  std::vector<int> bins;          // all binary variables
  std::vector<int> rank;          // branch rank per variable, -1 for non-branching
  std::vector<std::vector<int>> defining;  // derived binary -> primaries in its pure rows
  bool const_infeasible = false;
};

bool is_primary(BinKind k) { return k == BinKind::Gamma || k == BinKind::Order || k == BinKind::Pair; }

Compiled compile(const MpcProblem& p) {
  Compiled c;
  const int n = c.n = p.n_cont;
  c.lb.resize(n);
  c.ub.resize(n);
  for (int j = 0; j < n; ++j) {
    c.lb(j) = p.cs.vars[j].lb;
    c.ub(j) = p.cs.vars[j].ub;
  }
  auto box_min = [&](const VectorXd& a) {
    double s = 0;
    for (int j = 0; j < n; ++j) s += std::min(a(j) * c.lb(j), a(j) * c.ub(j));
    return s;
  };
  auto box_absmax = [&](const VectorXd& a, double k) {
    double lo = k, hi = k;
    for (int j = 0; j < n; ++j) {
      lo += std::min(a(j) * c.lb(j), a(j) * c.ub(j));
      hi += std::max(a(j) * c.lb(j), a(j) * c.ub(j));
    }
    return std::max(std::abs(lo), std::abs(hi));
  };
  for (std::size_t r = 0; r < p.cs.rows.size(); ++r) {
    const Row& row = p.cs.rows[r];
    CRow cr;
    cr.id = static_cast<int>(r);
    double sg = row.sense == Sense::LE ? -1.0 : 1.0;
    cr.eq = row.sense == Sense::EQ;
    cr.a = VectorXd::Zero(n);
    std::map<int, double> bins;
    for (const auto& t : row.lhs.terms) {
      if (t.var < n)
        cr.a(t.var) += sg * t.coef;
      else
        bins[t.var] += sg * t.coef;
    }
    for (auto [v, a] : bins)
      if (a != 0.0) cr.bins.push_back({v, a});
    cr.rhs = sg * row.rhs;
    if (row.quad) {
      cr.quad = true;
      cr.qa = VectorXd::Zero(n);
      for (const auto& t : row.quad->arg.terms) cr.qa(t.var) += t.coef;
      cr.qc = row.quad->arg.constant;
      cr.qcoef = sg * row.quad->coef;
    }
    bool has_cont = cr.a.cwiseAbs().maxCoeff() > 0.0 || cr.quad;
    if (!has_cont && cr.bins.empty()) {
      bool ok = cr.eq ? std::abs(cr.rhs) < 1e-12 : 0.0 >= cr.rhs - 1e-12;
      if (!ok) c.const_infeasible = true;
      continue;
    }
    if (!has_cont) {
      c.pure.push_back(std::move(cr));
    } else if (cr.bins.empty() && cr.eq) {
      c.cont_eq.push_back(std::move(cr));
    } else {
      cr.cont_min = box_min(cr.a);
      if (cr.quad) {
        double wm = box_absmax(cr.qa, cr.qc);
        cr.cont_min += cr.qcoef * wm * wm;
      }
      c.mixed.push_back(std::move(cr));
    }
  }
  std::vector<int> prim;
  c.rank.assign(p.cs.vars.size(), -1);
  for (std::size_t v = n; v < p.cs.vars.size(); ++v) {
    c.bins.push_back(static_cast<int>(v));
    if (is_primary(p.meta[v].kind)) prim.push_back(static_cast<int>(v));
  }
  std::stable_sort(prim.begin(), prim.end(), [&](int a, int b) {
    const auto &x = p.cs.vars[a], &y = p.cs.vars[b];
    return std::tie(x.cls, x.key0, x.key1) < std::tie(y.cls, y.key0, y.key1);
  });
  for (std::size_t k = 0; k < prim.size(); ++k) c.rank[prim[k]] = static_cast<int>(k);
  c.defining.resize(p.cs.vars.size());
  for (const auto& r : c.pure)
    for (auto [v, a] : r.bins) {
      if (is_primary(p.meta[v].kind)) continue;
      for (auto [u, b] : r.bins)
        if (is_primary(p.meta[u].kind)) c.defining[v].push_back(u);
    }
  for (auto& d : c.defining) {
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
  }
  return c;
}

using Fix = std::vector<signed char>;  // per variable: -1 free, 0, 1

bool propagate(const Compiled& c, Fix& f) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& r : c.pure) {
      double lo = 0, hi = 0;
      for (auto [v, a] : r.bins) {
        if (f[v] >= 0) {
          lo += a * f[v];
          hi += a * f[v];
        } else {
          lo += std::min(a, 0.0);
          hi += std::max(a, 0.0);
        }
      }
      if (hi < r.rhs - 1e-9) return false;
      if (r.eq && lo > r.rhs + 1e-9) return false;
      for (auto [v, a] : r.bins) {
        if (f[v] >= 0) continue;
        if (hi - std::abs(a) < r.rhs - 1e-9) {
          f[v] = a > 0 ? 1 : 0;
          changed = true;
        } else if (r.eq && lo + std::abs(a) > r.rhs + 1e-9) {
          f[v] = a > 0 ? 0 : 1;
          changed = true;
        } else {
          continue;
        }
        double val = f[v];
        lo += a * val - std::min(a, 0.0);
        hi += a * val - std::max(a, 0.0);
      }
    }
  }
  return true;
}

class Solver {
 public:
  Solver(const MpcProblem& p, const MpcOptions& o) : p_(p), opt_(o), c_(compile(p)) {
    for (std::size_t r = 0; r < c_.mixed.size(); ++r)
      if (c_.mixed[r].quad) pool_[r].push_back(c_.mixed[r].qc);
  }

  MpcSolution run(const Plan* warm) {
    auto t0 = Clock::now();
    MpcSolution sol;
    if (p_.trivially_infeasible || c_.const_infeasible) {
      sol.status = SolveStatus::Infeasible;
      return sol;
    }
    Fix root(p_.cs.vars.size(), -1);
    if (!propagate(c_, root)) {
      sol.status = SolveStatus::Infeasible;
      return sol;
    }
    if (warm) {
      VectorXd x = VectorXd::Zero(c_.n);
      for (int i = 0; i < 2; ++i)
        for (int k = 0; k < p_.T; ++k) {
          const auto& u = (*warm)[i];
          ControlInput2D ui = k < static_cast<int>(u.size()) ? u[k] : ControlInput2D{};
          x(p_.u_index(i, 0, k)) = ui.ux;
          x(p_.u_index(i, 1, k)) = ui.uy;
        }
      Fix a;
      complete(x, a);
    }
    struct QNode {
      double bound;
      long seq;
      Fix fix;
    };
    auto cmp = [](const QNode& a, const QNode& b) {
      if (a.bound != b.bound) return a.bound > b.bound;
      return a.seq > b.seq;
    };
    std::priority_queue<QNode, std::vector<QNode>, decltype(cmp)> open(cmp);
    long seq = 0;
    open.push({-1e300, seq++, root});
    bool budget_hit = false;
    bool first = true;
    while (!open.empty()) {
      if (nodes_ >= opt_.node_budget ||
          (opt_.time_limit > 0 &&
           std::chrono::duration<double>(Clock::now() - t0).count() > opt_.time_limit)) {
        budget_hit = true;
        break;
      }
      QNode nd = open.top();
      open.pop();
      if (have_inc_ && nd.bound >= inc_obj_ - tol(inc_obj_)) continue;
      ++nodes_;
      Fix fix = nd.fix;
      if (!propagate(c_, fix)) continue;
      VectorXd x;
      double bound;
      if (!relax(fix, x, bound)) {
        if (first) sol.root_bound = 1e300;
        first = false;
        continue;
      }
      if (first) {
        sol.root_bound = bound;
        first = false;
      }
      if (have_inc_ && bound >= inc_obj_ - tol(inc_obj_)) continue;
      Fix a;
      bool feas = complete(x, a);
      if (feas && have_inc_ && inc_obj_ <= bound + tol(bound)) continue;  // node closed
      int v = pick_branch(fix, x, a);
      if (v < 0) continue;
      int first_val = a.empty() || a[v] < 0 ? 0 : a[v];
      for (int val : {first_val, 1 - first_val}) {
        Fix child = fix;
        child[v] = static_cast<signed char>(val);
        open.push({bound, seq++, std::move(child)});
      }
    }
    sol.nodes = nodes_;
    double best_open = have_inc_ ? inc_obj_ : 1e300;
    if (budget_hit)
      while (!open.empty()) {
        best_open = std::min(best_open, open.top().bound);
        open.pop();
      }
    if (have_inc_) {
      sol.status = budget_hit ? SolveStatus::Feasible : SolveStatus::Optimal;
      sol.values = inc_;
      sol.parts = evaluate(p_, inc_);
      sol.objective = sol.parts.total();
      sol.best_bound = std::min(best_open, inc_obj_);
      sol.gap = std::max(0.0, (inc_obj_ - sol.best_bound) / std::max(1.0, std::abs(inc_obj_)));
      for (int i = 0; i < 2; ++i) {
        sol.u[i].resize(p_.T);
        for (int k = 0; k < p_.T; ++k) sol.u[i][k] = {inc_[p_.u_index(i, 0, k)], inc_[p_.u_index(i, 1, k)]};
      }
    } else {
      sol.status = budget_hit ? SolveStatus::TimeLimit : SolveStatus::Infeasible;
    }
    sol.wall = std::chrono::duration<double>(Clock::now() - t0).count();
    return sol;
  }

 private:
  static double tol(double v) { return 1e-9 + 1e-9 * std::abs(v); }

  double bin_value_obj(const Fix& f, bool optimistic) const {
    double s = 0;
    for (int v : c_.bins) {
      double q = p_.bin_obj[v];
      if (q == 0.0) continue;
      if (f[v] >= 0)
        s += q * f[v];
      else if (optimistic)
        s += std::min(q, 0.0);
    }
    return s;
  }

  bool relax(const Fix& fix, VectorXd& x, double& bound) {
    const int n = c_.n;
    std::vector<int> act;
    std::vector<double> eff;
    for (std::size_t r = 0; r < c_.mixed.size(); ++r) {
      const auto& row = c_.mixed[r];
      double B = 0;
      for (auto [v, a] : row.bins) B += fix[v] >= 0 ? a * fix[v] : std::max(a, 0.0);
      double e = row.rhs - B;
      if (e <= row.cont_min + 1e-9) continue;
      act.push_back(static_cast<int>(r));
      eff.push_back(e);
    }
    MatrixXd Aeq(c_.cont_eq.size(), n);
    VectorXd beq(c_.cont_eq.size());
    for (std::size_t k = 0; k < c_.cont_eq.size(); ++k) {
      Aeq.row(k) = c_.cont_eq[k].a.transpose();
      beq(k) = c_.cont_eq[k].rhs;
    }
    for (int round = 0; round <= opt_.cut_rounds; ++round) {
      int m = 0;
      for (int j = 0; j < n; ++j) m += 1 + (c_.ub(j) < 1e2 ? 1 : 0);
      for (std::size_t k = 0; k < act.size(); ++k) {
        const auto& row = c_.mixed[act[k]];
        m += row.quad ? static_cast<int>(pool_[act[k]].size()) : 1;
      }
      MatrixXd A = MatrixXd::Zero(m, n);
      VectorXd b(m);
      int r = 0;
      for (int j = 0; j < n; ++j) {
        A(r, j) = 1.0;
        b(r++) = c_.lb(j);
        if (c_.ub(j) < 1e2) {
          A(r, j) = -1.0;
          b(r++) = -c_.ub(j);
        }
      }
      for (std::size_t k = 0; k < act.size(); ++k) {
        const auto& row = c_.mixed[act[k]];
        if (!row.quad) {
          A.row(r) = row.a.transpose();
          b(r++) = eff[k];
          continue;
        }
        for (double w0 : pool_[act[k]]) {
          A.row(r) = (row.a + 2.0 * row.qcoef * w0 * row.qa).transpose();
          b(r++) = eff[k] - row.qcoef * (2.0 * w0 * row.qc - w0 * w0);
        }
      }
      auto res = qp::solve(p_.H, p_.g, Aeq, beq, A, b);
      if (res.status != qp::QpStatus::Optimal) return false;
      x = res.x;
      bound = res.objective + p_.c0 + bin_value_obj(fix, true);
      bool added = false;
      for (std::size_t k = 0; k < act.size(); ++k) {
        const auto& row = c_.mixed[act[k]];
        if (!row.quad) continue;
        double w = row.qa.dot(x) + row.qc;
        double lhs = row.a.dot(x) + row.qcoef * w * w;
        if (lhs < eff[k] - 1e-8) {
          pool_[act[k]].push_back(w);
          added = true;
        }
      }
      if (!added) break;
    }
    return true;
  }

  // Derives every binary from the continuous point and keeps it as incumbent when all rows hold.
  bool complete(const VectorXd& x, Fix& a) {
    const int N = static_cast<int>(p_.cs.vars.size());
    std::vector<double> vals(N, 0.0);
    for (int j = 0; j < c_.n; ++j) vals[j] = x(j);
    if (p_.phase == Phase::Platoon) {
      int f = p_.snap.follower, ld = 1 - f;
      for (int t = 1; t <= p_.T; ++t) {
        double dev = p_.x[ld][t].eval(vals) - p_.x[f][t].eval(vals) - p_.snap.desired_spacing;
        vals[p_.z_index(t)] = std::abs(dev) / p_.snap.desired_spacing;
      }
    }
    a.assign(N, -1);
    for (int v : c_.bins) {
      const auto& m = p_.meta[v];
      switch (m.kind) {
        case BinKind::Gamma: {
          double y = p_.y[m.subject][m.step].eval(vals);
          if (y < p_.snap.geometry.lower() || y > p_.snap.geometry.upper()) return false;
          a[v] = relations::eval_lane_membership(y, p_.snap.geometry) == m.lane ? 1 : 0;
          break;
        }
        case BinKind::Order:
          a[v] = p_.x[m.subject][m.step].eval(vals) < p_.snap.neighbors[m.neighbor].x[m.step] ? 1 : 0;
          break;
        case BinKind::Pair:
          a[v] = p_.x[0][m.step].eval(vals) < p_.x[1][m.step].eval(vals) ? 1 : 0;
          break;
        default:
          break;
      }
    }
    if (!propagate(c_, a)) return false;
    for (int v : c_.bins) {
      if (a[v] >= 0) continue;
      Fix trial = a;
      trial[v] = p_.bin_obj[v] < 0 ? 1 : 0;
      if (!propagate(c_, trial)) {
        trial = a;
        trial[v] = p_.bin_obj[v] < 0 ? 0 : 1;
        if (!propagate(c_, trial)) return false;
      }
      a = std::move(trial);
    }
    for (int v : c_.bins) vals[v] = a[v];
    if (p_.cs.max_violation(vals) > opt_.feas_tol) return false;
    VectorXd xc(c_.n);
    for (int j = 0; j < c_.n; ++j) xc(j) = vals[j];
    double obj = 0.5 * xc.dot(p_.H * xc) + p_.g.dot(xc) + p_.c0 + bin_value_obj(a, false);
    if (!have_inc_ || obj < inc_obj_ - tol(obj)) {
      have_inc_ = true;
      inc_obj_ = obj;
      inc_ = vals;
    }
    return true;
  }

  int pick_branch(const Fix& fix, const VectorXd& x, const Fix& a) const {
    int best = -1;
    auto consider = [&](int v) {
      if (fix[v] >= 0) return;
      if (c_.rank[v] >= 0) {
        if (best < 0 || c_.rank[v] < c_.rank[best]) best = v;
        return;
      }
      for (int u : c_.defining[v])
        if (fix[u] < 0 && (best < 0 || c_.rank[u] < c_.rank[best])) best = u;
    };
    if (!a.empty() && a.size() == p_.cs.vars.size()) {
      std::vector<double> vals(p_.cs.vars.size(), 0.0);
      for (int j = 0; j < c_.n; ++j) vals[j] = x(j);
      bool full = true;
      for (int v : c_.bins) {
        if (a[v] < 0) full = false;
        vals[v] = std::max<signed char>(a[v], 0);
      }
      if (full) {
        for (const auto& row : c_.mixed) {
          double lhs = row.a.dot(x);
          if (row.quad) {
            double w = row.qa.dot(x) + row.qc;
            lhs += row.qcoef * w * w;
          }
          for (auto [v, c] : row.bins) lhs += c * vals[v];
          if (lhs < row.rhs - opt_.feas_tol)
            for (auto [v, c] : row.bins) consider(v);
        }
      }
      for (int v : c_.bins) {
        double q = p_.bin_obj[v];
        if (q == 0.0 || fix[v] >= 0) continue;
        int opt_val = q < 0 ? 1 : 0;
        if (a[v] != opt_val) consider(v);
      }
    }
    if (best >= 0) return best;
    for (int v : c_.bins)
      if (fix[v] < 0 && c_.rank[v] >= 0 && (best < 0 || c_.rank[v] < c_.rank[best])) best = v;
    return best;
  }

  const MpcProblem& p_;
  MpcOptions opt_;
  Compiled c_;
  std::map<std::size_t, std::vector<double>> pool_;
  bool have_inc_ = false;
  double inc_obj_ = 0.0;
  std::vector<double> inc_;
  int nodes_ = 0;
};

}  // namespace

MpcSolution solve(const MpcProblem& p, const MpcOptions& opt, const Plan* warm) {
  Solver s(p, opt);
  return s.run(warm);
}

std::string problem_dump(const MpcProblem& p) {
  std::ostringstream os;
  os << "\\ phase " << to_string(p.phase) << " horizon " << p.T << " continuous " << p.n_cont << "\n";
  os << p.cs.dump();
  os << "objective c0 " << p.c0 << "\n";
  for (int j = 0; j < p.n_cont; ++j) {
    os << "  g " << p.cs.vars[j].name << " " << p.g(j);
    for (int k = j; k < p.n_cont; ++k)
      if (p.H(j, k) != 0.0 && std::abs(p.H(j, k)) > 1e-7) os << " H[" << p.cs.vars[k].name << "]=" << p.H(j, k);
    os << "\n";
  }
  for (std::size_t v = 0; v < p.bin_obj.size(); ++v)
    if (p.bin_obj[v] != 0.0) os << "  b " << p.cs.vars[v].name << " " << p.bin_obj[v] << "\n";
  return os.str();
}

std::string solution_dump(const MpcProblem& p, const MpcSolution& s) {
  std::ostringstream os;
  os << "status " << to_string(s.status) << "\nobjective " << s.objective << "\nroot_bound " << s.root_bound
     << "\nbest_bound " << s.best_bound << "\ngap " << s.gap << "\nnodes " << s.nodes << "\nwall " << s.wall << "\n";
  os << "J_u " << s.parts.J_u << " J_w " << s.parts.J_w << " J_y " << s.parts.J_y << " J_eta " << s.parts.J_eta
     << " J_v " << s.parts.J_v << " J_z " << s.parts.J_z << "\n";
  for (std::size_t v = 0; v < s.values.size(); ++v) os << p.cs.vars[v].name << " = " << s.values[v] << "\n";
  return os.str();
}

}  // namespace synccav::mpc
