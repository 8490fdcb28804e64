#include "safebid/dense_simplex.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace safebid::lp {

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-10;
constexpr int kMaxIterations = 10000;

// Tableau layout: rows 0..m-1 are constraints, columns 0..n-1 structural,
// n..n+m-1 artificial, last column is the right-hand side.
struct Tableau {
  int m = 0;
  int n = 0;
  std::vector<std::vector<double>> t;
  std::vector<int> basis;

  int rhs() const { return n + m; }

  void pivot(int row, int col) {
    const double p = t[row][col];
    for (double& v : t[row]) v /= p;
    for (int r = 0; r < m; ++r) {
      if (r == row) continue;
      const double f = t[r][col];
      if (f == 0.0) continue;
      for (int j = 0; j <= rhs(); ++j) t[r][j] -= f * t[row][j];
    }
    basis[row] = col;
  }

  double reduced_cost(const std::vector<double>& cost, int col) const {
    double z = 0.0;
    for (int r = 0; r < m; ++r) z += cost[basis[r]] * t[r][col];
    return cost[col] - z;
  }

  // Runs simplex iterations for the given full-length cost vector. Columns
  // with index >= col_limit never enter. Returns false if unbounded.
  bool optimize(const std::vector<double>& cost, int col_limit) {
    for (int iter = 0; iter < kMaxIterations; ++iter) {
      int enter = -1;
      for (int j = 0; j < col_limit; ++j) {
        if (reduced_cost(cost, j) < -kCostTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;

      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < m; ++r) {
        if (t[r][enter] > kPivotTol) {
          const double ratio = t[r][rhs()] / t[r][enter];
          if (ratio < best - 1e-12 ||
              (std::abs(ratio - best) <= 1e-12 && leave >= 0 && basis[r] < basis[leave])) {
            best = ratio;
            leave = r;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    throw std::runtime_error("dense simplex: iteration limit reached");
  }
};

}  // namespace

Solution solve_standard_form(const std::vector<std::vector<double>>& a,
                             const std::vector<double>& b, const std::vector<double>& c) {
  const int m = static_cast<int>(a.size());
  const int n = static_cast<int>(c.size());
  if (static_cast<int>(b.size()) != m) throw std::invalid_argument("dense simplex: b size");
  for (const auto& row : a) {
    if (static_cast<int>(row.size()) != n) throw std::invalid_argument("dense simplex: row size");
  }

  Tableau tab;
  tab.m = m;
  tab.n = n;
  tab.t.assign(m, std::vector<double>(n + m + 1, 0.0));
  tab.basis.resize(m);
  std::vector<double> flip(m, 1.0);
  for (int r = 0; r < m; ++r) {
    if (b[r] < 0.0) flip[r] = -1.0;
    for (int j = 0; j < n; ++j) tab.t[r][j] = flip[r] * a[r][j];
    tab.t[r][n + r] = 1.0;
    tab.t[r][tab.rhs()] = flip[r] * b[r];
    tab.basis[r] = n + r;
  }

  // Phase 1: minimise the sum of artificials.
  std::vector<double> phase1(n + m, 0.0);
  for (int r = 0; r < m; ++r) phase1[n + r] = 1.0;
  tab.optimize(phase1, n + m);
  double infeas = 0.0;
  for (int r = 0; r < m; ++r) infeas += phase1[tab.basis[r]] * tab.t[r][tab.rhs()];
  Solution sol;
  if (infeas > 1e-9) {
    sol.status = Status::Infeasible;
    return sol;
  }

  // Drive zero-level artificials out of the basis where a structural column allows it.
  for (int r = 0; r < m; ++r) {
    if (tab.basis[r] < n) continue;
    for (int j = 0; j < n; ++j) {
      if (std::abs(tab.t[r][j]) > kPivotTol) {
        tab.pivot(r, j);
        break;
      }
    }
  }

  // Phase 2 on the original costs; artificials are barred from entering.
  std::vector<double> phase2(n + m, 0.0);
  for (int j = 0; j < n; ++j) phase2[j] = c[j];
  if (!tab.optimize(phase2, n)) {
    sol.status = Status::Unbounded;
    return sol;
  }

  sol.status = Status::Optimal;
  sol.x.assign(n, 0.0);
  for (int r = 0; r < m; ++r) {
    if (tab.basis[r] < n) sol.x[tab.basis[r]] = tab.t[r][tab.rhs()];
  }
  sol.objective = 0.0;
  for (int j = 0; j < n; ++j) sol.objective += c[j] * sol.x[j];

  // The artificial block of the tableau holds B^{-1}, so pi = c_B B^{-1}.
  sol.duals.assign(m, 0.0);
  for (int k = 0; k < m; ++k) {
    double pi = 0.0;
    for (int r = 0; r < m; ++r) pi += phase2[tab.basis[r]] * tab.t[r][n + k];
    sol.duals[k] = flip[k] * pi;
  }
  return sol;
}

}  // namespace safebid::lp
