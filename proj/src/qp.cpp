#include "synccav/qp.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace synccav::qp {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Givens rotation zeroing b in (a, b); returns (c, s) with c*a + s*b = r.
void givens(double a, double b, double& c, double& s, double& r) {
  r = std::hypot(a, b);
  if (r == 0.0) {
    c = 1.0;
    s = 0.0;
    return;
  }
  c = a / r;
  s = b / r;
}

struct Factor {
  int n;
  MatrixXd J;  // J J' = H^{-1}, first iq columns span the active normals
  MatrixXd R;  // upper triangular, iq x iq block used
  int iq = 0;

  // d = J' np; rotate so that d[iq+1..] = 0, then append column to R.
  bool add(VectorXd& d, double r_norm) {
    for (int j = n - 1; j > iq; --j) {
      double c, s, r;
      givens(d(j - 1), d(j), c, s, r);
      if (s == 0.0) continue;
      d(j - 1) = r;
      d(j) = 0.0;
      for (int k = 0; k < n; ++k) {
        double a = J(k, j - 1), b = J(k, j);
        J(k, j - 1) = c * a + s * b;
        J(k, j) = -s * a + c * b;
      }
    }
    for (int i = 0; i <= iq; ++i) R(i, iq) = d(i);
    ++iq;
    return std::abs(d(iq - 1)) > std::numeric_limits<double>::epsilon() * r_norm;
  }

  // Removes active column at position qq and restores triangularity.
  void remove(int qq) {
    for (int j = qq; j < iq - 1; ++j)
      for (int i = 0; i < n; ++i) R(i, j) = R(i, j + 1);
    for (int i = 0; i < n; ++i) R(i, iq - 1) = 0.0;
    --iq;
    for (int j = qq; j < iq; ++j) {
      double c, s, r;
      givens(R(j, j), R(j + 1, j), c, s, r);
      if (s == 0.0) continue;
      for (int k = j; k < iq; ++k) {
        double a = R(j, k), b = R(j + 1, k);
        R(j, k) = c * a + s * b;
        R(j + 1, k) = -s * a + c * b;
      }
      R(j + 1, j) = 0.0;
      for (int k = 0; k < n; ++k) {
        double a = J(k, j), b = J(k, j + 1);
        J(k, j) = c * a + s * b;
        J(k, j + 1) = -s * a + c * b;
      }
    }
  }
};

}  // namespace

QpResult solve(const MatrixXd& H, const VectorXd& g, const MatrixXd& Aeq, const VectorXd& beq, const MatrixXd& Ain,
               const VectorXd& bin, int max_iter) {
  const int n = static_cast<int>(H.rows());
  const int me = static_cast<int>(Aeq.rows());
  const int mi = static_cast<int>(Ain.rows());
  QpResult res;

  Eigen::LLT<MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) return res;
  Factor F{n, MatrixXd::Identity(n, n), MatrixXd::Zero(n, n)};
  // J = L^{-T}
  F.J = llt.matrixU().solve(MatrixXd::Identity(n, n));
  double r_norm = 1.0;

  VectorXd x = -llt.solve(g);
  double f = 0.5 * g.dot(x);
  std::vector<int> active;  // constraint ids: 0..me-1 equalities, me.. inequalities
  std::vector<double> u;    // multipliers by active position
  u.reserve(n + 1);
  VectorXd d(n), z(n), r(n);

  auto normal = [&](int id) -> VectorXd {
    return id < me ? VectorXd(Aeq.row(id).transpose()) : VectorXd(Ain.row(id - me).transpose());
  };
  auto step_dirs = [&](const VectorXd& np) {
    d = F.J.transpose() * np;
    z = F.J.rightCols(n - F.iq) * d.tail(n - F.iq);
    for (int i = F.iq - 1; i >= 0; --i) {
      double s = d(i);
      for (int j = i + 1; j < F.iq; ++j) s -= F.R(i, j) * r(j);
      r(i) = s / F.R(i, i);
    }
  };

  for (int e = 0; e < me; ++e) {
    VectorXd np = normal(e);
    step_dirs(np);
    double t2 = 0.0;
    double zn = z.dot(np);
    if (std::abs(zn) > 1e-14) t2 = (beq(e) - np.dot(x)) / zn;
    x += t2 * z;
    f += 0.5 * t2 * t2 * zn;
    for (int k = 0; k < F.iq; ++k) u[k] -= t2 * r(k);
    u.push_back(t2);
    if (!F.add(d, r_norm)) {
      res.status = QpStatus::DependentEqualities;
      return res;
    }
    r_norm = std::max(r_norm, std::abs(d(F.iq - 1)));
    active.push_back(e);
  }

  std::vector<char> in_active(mi, 0);
  int it = 0;
  while (true) {
    if (++it > max_iter) return res;
    // most violated inequality (lowest index on ties)
    int p = -1;
    double worst = -1e-10;
    for (int i = 0; i < mi; ++i) {
      if (in_active[i]) continue;
      double viol = Ain.row(i).dot(x) - bin(i);
      double scale = std::max(1.0, Ain.row(i).norm());
      if (viol / scale < worst) {
        worst = viol / scale;
        p = i;
      }
    }
    if (p < 0) break;
    VectorXd np = Ain.row(p).transpose();
    double sp = np.dot(x) - bin(p);
    double u_plus = 0.0;
    while (true) {
      if (++it > max_iter) return res;
      step_dirs(np);
      // partial step: largest dual step keeping active inequality multipliers nonnegative
      double t1 = kInf;
      int l = -1;
      for (int k = me; k < F.iq; ++k) {
        if (r(k) > 1e-14) {
          double tk = u[k] / r(k);
          if (tk < t1) {
            t1 = tk;
            l = k;
          }
        }
      }
      double zn = z.dot(np);
      double t2 = std::abs(zn) > 1e-14 * std::max(1.0, np.squaredNorm()) ? -sp / zn : kInf;
      double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        res.status = QpStatus::Infeasible;
        return res;
      }
      if (!std::isfinite(t2)) {
        for (int k = 0; k < F.iq; ++k) u[k] -= t * r(k);
        u_plus += t;
        in_active[active[l] - me] = 0;
        active.erase(active.begin() + l);
        u.erase(u.begin() + l);
        F.remove(l);
        continue;
      }
      x += t * z;
      f += t * zn * (0.5 * t + u_plus);
      for (int k = 0; k < F.iq; ++k) u[k] -= t * r(k);
      u_plus += t;
      if (t == t2) {
        if (!F.add(d, r_norm)) {
          // numerically dependent on the active set: treat as satisfied
          F.iq--;
          for (int i = 0; i < n; ++i) F.R(i, F.iq) = 0.0;
          in_active[p] = 1;  // skip it for the rest of this solve
          break;
        }
        r_norm = std::max(r_norm, std::abs(d(F.iq - 1)));
        active.push_back(me + p);
        u.push_back(u_plus);
        in_active[p] = 1;
        break;
      }
      in_active[active[l] - me] = 0;
      active.erase(active.begin() + l);
      u.erase(u.begin() + l);
      F.remove(l);
      sp = np.dot(x) - bin(p);
    }
  }
  // final feasibility check (dependent rows skipped above must still hold)
  for (int i = 0; i < mi; ++i)
    if (Ain.row(i).dot(x) - bin(i) < -1e-7 * std::max(1.0, Ain.row(i).norm())) return res;
  res.status = QpStatus::Optimal;
  res.x = x;
  res.objective = 0.5 * x.dot(H * x) + g.dot(x);
  res.iterations = it;
  (void)f;
  return res;
}

}  // namespace synccav::qp
