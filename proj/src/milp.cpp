#include "safebid/milp.hpp"

#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "safebid/errors.hpp"

namespace safebid::safety {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_term(double coef, const std::string& name) {
  return fmt::format("{} {} {}", coef < 0 ? '-' : '+', std::abs(coef), name);
}

const char* sense_text(Sense s) {
  switch (s) {
    case Sense::LessEq:
      return "<=";
    case Sense::GreaterEq:
      return ">=";
    case Sense::Equal:
      return "=";
  }
  return "=";
}

class Builder {
 public:
  explicit Builder(MilpModel& m) : m_(m) {}

  int add_var(std::string name, VarKind kind, double lo, double hi) {
    m_.vars.push_back(Variable{std::move(name), kind, lo, hi});
    m_.objective.push_back(0.0);
    return static_cast<int>(m_.vars.size()) - 1;
  }

  // Terms with repeated variables are merged and zero coefficients dropped.
  void add_row(std::string name, const std::vector<Term>& terms, Sense sense, double rhs,
               int placeholder) {
    std::map<int, double> merged;
    for (const Term& t : terms) merged[t.var] += t.coef;
    Constraint c{std::move(name), {}, sense, rhs};
    for (const auto& [v, k] : merged) {
      if (k != 0.0) c.terms.push_back(Term{v, k});
    }
    if (c.terms.empty()) {
      const bool holds = (sense == Sense::LessEq && 0.0 <= rhs) ||
                         (sense == Sense::GreaterEq && 0.0 >= rhs) ||
                         (sense == Sense::Equal && rhs == 0.0);
      if (holds) return;
      // Keep an explicitly infeasible row visible to external solvers.
      c.terms.push_back(Term{placeholder, 0.0});
    }
    m_.rows.push_back(std::move(c));
  }

 private:
  MilpModel& m_;
};

}  // namespace

std::string u_name(std::size_t unit, int step) { return fmt::format("u_{}_{}", unit + 1, step); }
std::string x_name(std::size_t unit, int step) { return fmt::format("x_{}_{}", unit + 1, step); }
std::string z_name(std::size_t unit, int step) { return fmt::format("z_{}_{}", unit + 1, step); }

int MilpModel::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

double MilpModel::objective_value(std::span<const double> values) const {
  double v = objective_offset;
  for (std::size_t j = 0; j < objective.size(); ++j) v += objective[j] * values[j];
  return v;
}

std::vector<std::string> MilpModel::violations(std::span<const double> values, double tol) const {
  std::vector<std::string> bad;
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const Variable& v = vars[j];
    if (values[j] < v.lo - tol || values[j] > v.hi + tol) bad.push_back("bound " + v.name);
    if (v.kind == VarKind::Binary && std::abs(values[j] - std::round(values[j])) > tol) {
      bad.push_back("integrality " + v.name);
    }
  }
  for (const Constraint& c : rows) {
    double lhs = 0.0;
    for (const Term& t : c.terms) lhs += t.coef * values[static_cast<std::size_t>(t.var)];
    const bool ok = (c.sense == Sense::LessEq && lhs <= c.rhs + tol) ||
                    (c.sense == Sense::GreaterEq && lhs >= c.rhs - tol) ||
                    (c.sense == Sense::Equal && std::abs(lhs - c.rhs) <= tol);
    if (!ok) bad.push_back(c.name);
  }
  return bad;
}

std::string MilpModel::to_lp_format() const {
  std::string out;
  out += "\\ Maintenance filter MILP (big-M linearisation)\n";
  out += fmt::format("\\ objective offset: {}\n", objective_offset);
  out += "Minimize\n obj:";
  int on_line = 0;
  bool any = false;
  for (std::size_t j = 0; j < objective.size(); ++j) {
    if (objective[j] == 0.0) continue;
    if (on_line == 8) {
      out += "\n     ";
      on_line = 0;
    }
    out += " " + format_term(objective[j], vars[j].name);
    ++on_line;
    any = true;
  }
  if (!any && !vars.empty()) out += " 0 " + vars.front().name;
  out += "\nSubject To\n";
  for (const Constraint& c : rows) {
    out += " " + c.name + ":";
    on_line = 0;
    for (const Term& t : c.terms) {
      if (on_line == 8) {
        out += "\n  ";
        on_line = 0;
      }
      out += " " + format_term(t.coef, vars[static_cast<std::size_t>(t.var)].name);
      ++on_line;
    }
    out += fmt::format(" {} {}\n", sense_text(c.sense), c.rhs);
  }
  out += "Bounds\n";
  for (const Variable& v : vars) {
    if (v.kind == VarKind::Binary) continue;
    if (v.lo == -kInf && v.hi == kInf) {
      out += fmt::format(" {} free\n", v.name);
    } else if (v.lo == v.hi) {
      out += fmt::format(" {} = {}\n", v.name, v.lo);
    } else if (v.hi == kInf) {
      out += fmt::format(" {} >= {}\n", v.name, v.lo);
    } else {
      out += fmt::format(" {} <= {} <= {}\n", v.lo, v.name, v.hi);
    }
  }
  out += "Binaries\n";
  for (const Variable& v : vars) {
    if (v.kind == VarKind::Binary) out += " " + v.name + "\n";
  }
  out += "End\n";
  return out;
}

MilpModel big_m_expand(const FilterConfig& cfg, const SafetyState& state,
                       std::span<const std::uint8_t> request, double big_m) {
  validate(cfg);
  if (!(big_m >= cfg.horizon)) {
    throw BadBigM(fmt::format("big-M constant {} is below the horizon {}", big_m, cfg.horizon));
  }
  const std::size_t n = cfg.units();
  if (request.size() != n || state.since_maint.size() != n || state.recent.size() != n) {
    throw InvalidFilterConfig("request or state does not match the number of units");
  }
  const int t = state.t;
  const int end = lookahead_end(cfg, t);

  MilpModel m;
  Builder b(m);
  // idx[i][s - t]
  std::vector<std::vector<int>> u(n), x(n), z(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int s = t; s <= end; ++s) {
      u[i].push_back(b.add_var(u_name(i, s), VarKind::Binary, 0.0, 1.0));
    }
    for (int s = t; s <= end; ++s) {
      const double fixed = state.since_maint[i];
      x[i].push_back(s == t ? b.add_var(x_name(i, s), VarKind::Continuous, fixed, fixed)
                            : b.add_var(x_name(i, s), VarKind::Continuous, 0.0, kInf));
    }
    for (int s = t; s < end; ++s) {
      z[i].push_back(b.add_var(z_name(i, s), VarKind::Continuous, -kInf, kInf));
    }
  }

  // Hamming distance of the step-t decision, linear on binaries.
  for (std::size_t i = 0; i < n; ++i) {
    const int var = u[i][0];
    if (request[i]) {
      m.objective[static_cast<std::size_t>(var)] = -1.0;
      m.objective_offset += 1.0;
    } else {
      m.objective[static_cast<std::size_t>(var)] = 1.0;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const int id = static_cast<int>(i) + 1;
    for (int s = t; s < end; ++s) {
      const std::size_t k = static_cast<std::size_t>(s - t);
      const int uu = u[i][k];
      const int xx = x[i][k];
      const int zz = z[i][k];
      // x(s+1) = x(s) - z(s) + (1 - u(s))
      b.add_row(fmt::format("s1_{}_{}", id, s),
                {{x[i][k + 1], 1.0}, {xx, -1.0}, {zz, 1.0}, {uu, 1.0}}, Sense::Equal, 1.0, uu);
      // 0 <= z <= u M;  z >= x - (1-u) M;  z <= x + (1-u) M
      b.add_row(fmt::format("bigm_lo_{}_{}", id, s), {{zz, 1.0}}, Sense::GreaterEq, 0.0, uu);
      b.add_row(fmt::format("bigm_on_{}_{}", id, s), {{zz, 1.0}, {uu, -big_m}}, Sense::LessEq, 0.0,
                uu);
      b.add_row(fmt::format("bigm_ge_{}_{}", id, s), {{zz, 1.0}, {xx, -1.0}, {uu, -big_m}},
                Sense::GreaterEq, -big_m, uu);
      b.add_row(fmt::format("bigm_le_{}_{}", id, s), {{zz, 1.0}, {xx, -1.0}, {uu, big_m}},
                Sense::LessEq, big_m, uu);
    }
    b.add_row(fmt::format("s2_{}", id), {{x[i].back(), 1.0}}, Sense::GreaterEq,
              static_cast<double>(cfg.required[i]), u[i][0]);
  }

  for (int s = t; s <= end; ++s) {
    std::vector<Term> terms;
    for (std::size_t i = 0; i < n; ++i) terms.push_back({u[i][static_cast<std::size_t>(s - t)], 1.0});
    b.add_row(fmt::format("s3_{}", s), terms, Sense::LessEq,
              static_cast<double>(cfg.max_concurrent), terms.front().var);
  }

  // u(s) - u(s-1) <= u(s+D-1). Past decisions are constants; decisions
  // beyond the lookahead are taken as 0.
  for (std::size_t i = 0; i < n; ++i) {
    const int d = cfg.block[i];
    const Bits& hist = state.recent[i];
    auto past = [&](int s) -> double {
      const int back = t - s;
      const int len = static_cast<int>(hist.size());
      if (s < 1 || back > len) return 0.0;
      return hist[static_cast<std::size_t>(len - back)];
    };
    for (int s = std::max(1, t - d + 1); s <= end; ++s) {
      if (s + d - 1 < t) continue;
      std::vector<Term> terms;
      double rhs = 0.0;
      auto add = [&](int step, double coef) {
        if (step > end) return;
        if (step < t) {
          rhs -= coef * past(step);
        } else {
          terms.push_back({u[i][static_cast<std::size_t>(step - t)], coef});
        }
      };
      add(s, 1.0);
      add(s - 1, -1.0);
      add(s + d - 1, -1.0);
      b.add_row(fmt::format("s4_{}_{}", i + 1, s), terms, Sense::LessEq, rhs, u[i][0]);
    }
  }
  return m;
}

}  // namespace safebid::safety
