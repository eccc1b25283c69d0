#pragma once

// Exhaustive 0/1 enumeration over the binaries of a constraint set with the continuous variables pinned.
// Rows are checked as soon as their last binary (in enumeration order) is assigned, so no solution is skipped.

#include <algorithm>
#include <vector>

#include "synccav/linear.hpp"

namespace testsupport {

struct Enumerator {
  const synccav::LinearConstraintSet& set;
  std::vector<double> x;
  std::vector<int> order;                    // binary variables in enumeration order
  std::vector<std::vector<int>> rows_at;     // rows completed when order[p] is assigned
  std::vector<std::vector<double>> solutions;
  int limit = 2;
  double tol = 1e-9;

  Enumerator(const synccav::LinearConstraintSet& s, std::vector<double> pinned, std::vector<int> ord)
      : set(s), x(std::move(pinned)), order(std::move(ord)) {
    std::vector<int> pos(set.vars.size(), -1);
    for (std::size_t p = 0; p < order.size(); ++p) pos[order[p]] = static_cast<int>(p);
    rows_at.assign(order.size() + 1, {});
    for (std::size_t r = 0; r < set.rows.size(); ++r) {
      int last = -1;
      for (const auto& t : set.rows[r].lhs.terms)
        if (set.vars[t.var].binary) last = std::max(last, pos[t.var]);
      rows_at[last < 0 ? order.size() : static_cast<std::size_t>(last)].push_back(static_cast<int>(r));
    }
  }

  bool rows_ok(int p) const {
    for (int r : rows_at[p])
      if (set.violation(set.rows[r], x) > tol) return false;
    return true;
  }

  void run(std::size_t p = 0) {
    if (static_cast<int>(solutions.size()) >= limit) return;
    if (p == order.size()) {
      solutions.push_back(x);
      return;
    }
    for (int b = 0; b <= 1; ++b) {
      x[order[p]] = b;
      if (rows_ok(static_cast<int>(p))) run(p + 1);
    }
    x[order[p]] = 0;
  }

  // Rows with no binaries must hold at the pinned point.
  bool continuous_rows_ok() const { return rows_ok(static_cast<int>(order.size())); }
};

}  // namespace testsupport
