#pragma once

#include <Eigen/Dense>

namespace synccav::qp {

enum class QpStatus { Optimal, Infeasible, DependentEqualities };

struct QpResult {
  QpStatus status = QpStatus::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
};

// Dense strictly convex QP by the Goldfarb-Idnani dual active-set method:
//   min 1/2 x'Hx + g'x  s.t.  Aeq x = beq,  Ain x >= bin.
// H must be positive definite; rows of Aeq/Ain are constraints.
QpResult solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::MatrixXd& Aeq,
               const Eigen::VectorXd& beq, const Eigen::MatrixXd& Ain, const Eigen::VectorXd& bin,
               int max_iter = 2000);

}  // namespace synccav::qp
