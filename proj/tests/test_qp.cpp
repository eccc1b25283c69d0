#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <limits>
#include <random>

#include "synccav/qp.hpp"

using namespace synccav::qp;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using doctest::Approx;

namespace {

// Active-set enumeration: for every subset of inequalities solve the equality-constrained
// KKT system, keep primal feasible points with nonnegative multipliers, return the best.
double kkt_oracle(const MatrixXd& H, const VectorXd& g, const MatrixXd& Aeq, const VectorXd& beq,
                  const MatrixXd& Ain, const VectorXd& bin, bool& feasible) {
  const int n = H.rows(), me = Aeq.rows(), mi = Ain.rows();
  double best = std::numeric_limits<double>::infinity();
  feasible = false;
  for (int mask = 0; mask < (1 << mi); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < mi; ++i)
      if (mask >> i & 1) act.push_back(i);
    int m = me + static_cast<int>(act.size());
    if (m > n) continue;
    MatrixXd K = MatrixXd::Zero(n + m, n + m);
    VectorXd rhs(n + m);
    K.topLeftCorner(n, n) = H;
    rhs.head(n) = -g;
    for (int e = 0; e < me; ++e) {
      K.block(n + e, 0, 1, n) = Aeq.row(e);
      K.block(0, n + e, n, 1) = -Aeq.row(e).transpose();
      rhs(n + e) = beq(e);
    }
    for (int k = 0; k < (int)act.size(); ++k) {
      K.block(n + me + k, 0, 1, n) = Ain.row(act[k]);
      K.block(0, n + me + k, n, 1) = -Ain.row(act[k]).transpose();
      rhs(n + me + k) = bin(act[k]);
    }
    Eigen::FullPivLU<MatrixXd> lu(K);
    if (lu.rank() < n + m) continue;
    VectorXd sol = lu.solve(rhs);
    VectorXd x = sol.head(n);
    bool ok = true;
    for (int k = 0; k < (int)act.size(); ++k) ok = ok && sol(n + me + k) >= -1e-9;
    for (int i = 0; i < mi; ++i) ok = ok && Ain.row(i).dot(x) >= bin(i) - 1e-9;
    if (!ok) continue;
    feasible = true;
    best = std::min(best, 0.5 * x.dot(H * x) + g.dot(x));
  }
  return best;
}

}  // namespace

TEST_CASE("unconstrained and single bound") {
  MatrixXd H = MatrixXd::Identity(2, 2);
  VectorXd g(2);
  g << -1, -2;
  auto r = solve(H, g, MatrixXd(0, 2), VectorXd(0), MatrixXd(0, 2), VectorXd(0));
  REQUIRE(r.status == QpStatus::Optimal);
  CHECK(r.x(0) == Approx(1));
  CHECK(r.x(1) == Approx(2));
  MatrixXd A(1, 2);
  A << -1, -1;
  VectorXd b(1);
  b << -1;  // x0 + x1 <= 1
  auto c = solve(H, g, MatrixXd(0, 2), VectorXd(0), A, b);
  REQUIRE(c.status == QpStatus::Optimal);
  CHECK(c.x(0) == Approx(0));
  CHECK(c.x(1) == Approx(1));
}

TEST_CASE("infeasible box") {
  MatrixXd H = MatrixXd::Identity(1, 1);
  VectorXd g = VectorXd::Zero(1);
  MatrixXd A(2, 1);
  A << 1, -1;
  VectorXd b(2);
  b << 2, -1;  // x >= 2 and x <= 1
  CHECK(solve(H, g, MatrixXd(0, 1), VectorXd(0), A, b).status == QpStatus::Infeasible);
}

TEST_CASE("random problems agree with KKT enumeration") {
  std::mt19937 rng(11);
  std::normal_distribution<double> N(0, 1);
  int feas = 0, infeas = 0;
  for (int trial = 0; trial < 300; ++trial) {
    int n = 2 + trial % 4, me = trial % 3 == 0 ? 1 : 0, mi = 3 + trial % 6;
    MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = N(rng);
    MatrixXd H = M * M.transpose() + 0.1 * MatrixXd::Identity(n, n);
    VectorXd g(n), beq(me), bin(mi);
    MatrixXd Aeq(me, n), Ain(mi, n);
    for (int i = 0; i < n; ++i) g(i) = 3 * N(rng);
    for (int e = 0; e < me; ++e) {
      for (int j = 0; j < n; ++j) Aeq(e, j) = N(rng);
      beq(e) = N(rng);
    }
    for (int i = 0; i < mi; ++i) {
      for (int j = 0; j < n; ++j) Ain(i, j) = N(rng);
      bin(i) = N(rng) - (trial % 5 == 0 ? -1.5 : 1.0);
    }
    bool ok = false;
    double ref = kkt_oracle(H, g, Aeq, beq, Ain, bin, ok);
    auto r = solve(H, g, Aeq, beq, Ain, bin);
    if (ok) {
      ++feas;
      REQUIRE(r.status == QpStatus::Optimal);
      CHECK(r.objective == Approx(ref).epsilon(1e-6).scale(1.0));
      for (int i = 0; i < mi; ++i) CHECK(Ain.row(i).dot(r.x) >= bin(i) - 1e-7);
      for (int e = 0; e < me; ++e) CHECK(Aeq.row(e).dot(r.x) == Approx(beq(e)).epsilon(1e-8));
    } else {
      ++infeas;
      CHECK(r.status != QpStatus::Optimal);
    }
  }
  CHECK(feas > 100);
  CHECK(infeas > 5);
}

TEST_CASE("redundant duplicated constraints") {
  MatrixXd H = MatrixXd::Identity(2, 2);
  VectorXd g(2);
  g << 1, 1;
  MatrixXd A(3, 2);
  A << 1, 0, 1, 0, 2, 0;
  VectorXd b(3);
  b << 1, 1, 2;
  auto r = solve(H, g, MatrixXd(0, 2), VectorXd(0), A, b);
  REQUIRE(r.status == QpStatus::Optimal);
  CHECK(r.x(0) == Approx(1));
  CHECK(r.x(1) == Approx(-1));
}
