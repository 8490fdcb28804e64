#pragma once

#include <vector>

namespace safebid::lp {

enum class Status { Optimal, Infeasible, Unbounded };

struct Solution {
  Status status = Status::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  // One multiplier per equality row: the sensitivity of the optimal
  // objective to that row's right-hand side.
  std::vector<double> duals;
};

// Solves  min c'x  s.t.  A x = b,  x >= 0  with a dense two-phase tableau
// simplex and Bland's pivoting rule. A is row-major, one vector per row.
// Intended for small dense problems (tens of rows and columns).
Solution solve_standard_form(const std::vector<std::vector<double>>& a,
                             const std::vector<double>& b, const std::vector<double>& c);

}  // namespace safebid::lp
