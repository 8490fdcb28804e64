#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "safebid/safety.hpp"

namespace safebid::safety {

enum class VarKind { Binary, Continuous };
enum class Sense { LessEq, GreaterEq, Equal };

struct Variable {
  std::string name;
  VarKind kind = VarKind::Continuous;
  double lo = 0.0;
  double hi = 0.0;  // +inf for unbounded
};

struct Term {
  int var = 0;
  double coef = 0.0;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::LessEq;
  double rhs = 0.0;
};

// Plain coefficient representation of a minimisation MILP.
struct MilpModel {
  std::vector<Variable> vars;
  std::vector<double> objective;  // one coefficient per variable
  double objective_offset = 0.0;
  std::vector<Constraint> rows;

  int index_of(const std::string& name) const;  // -1 if absent
  double objective_value(std::span<const double> values) const;
  // Names of violated rows and bounds for a full variable assignment.
  std::vector<std::string> violations(std::span<const double> values, double tol = 1e-9) const;
  // CPLEX LP text format.
  std::string to_lp_format() const;
};

// Linearised filter problem for the decision at state.t over the lookahead:
// binaries u_i_s, counters x_i_s, products z_i_s = u_i_s * x_i_s encoded by
// the three big-M rows, the counter recursion rewritten with z, the
// end-of-lookahead counter bound, the concurrency cap, and the
// start-implies-later rule. The objective is the Hamming distance of the
// step-t decision to `request`. Throws BadBigM if big_m < cfg.horizon.
MilpModel big_m_expand(const FilterConfig& cfg, const SafetyState& state,
                       std::span<const std::uint8_t> request, double big_m);

// Variable names used by big_m_expand (units 1-based, absolute steps).
std::string u_name(std::size_t unit, int step);
std::string x_name(std::size_t unit, int step);
std::string z_name(std::size_t unit, int step);

}  // namespace safebid::safety
