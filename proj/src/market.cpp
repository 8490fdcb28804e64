#include "safebid/market.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "safebid/dense_simplex.hpp"
#include "safebid/errors.hpp"

namespace safebid::market {

std::vector<UnitParams> case_study_units() {
  struct Row {
    double cost, gmax, gmin, maint;
  };
  constexpr Row rows[] = {
      {2.0, 80, 5, 120}, {1.75, 80, 5, 135}, {1.0, 50, 5, 142},
      {3.25, 55, 5, 125}, {3.0, 30, 5, 175}, {3.0, 40, 5, 165},
  };
  std::vector<UnitParams> units;
  int id = 1;
  for (const Row& r : rows) {
    UnitParams u;
    u.id = id++;
    u.marginal_cost = r.cost;
    u.g_max = r.gmax;
    u.g_min = r.gmin;
    u.ramp_up = r.gmax;
    u.ramp_down = r.gmax;
    u.maint_cost = r.maint;
    u.maint_block = 1;
    u.maint_required = 1;
    u.k_max = 2.0;
    units.push_back(u);
  }
  return units;
}

namespace {

void check_dimensions(const MarketInstance& inst) {
  const std::size_t n = inst.size();
  if (inst.bids.size() != n || inst.maint.size() != n ||
      (inst.prev_gen && inst.prev_gen->size() != n)) {
    throw DimensionMismatch(fmt::format(
        "instance has {} units but {} bids, {} maintenance flags{}", n, inst.bids.size(),
        inst.maint.size(),
        inst.prev_gen ? fmt::format(", {} previous outputs", inst.prev_gen->size()) : ""));
  }
}

void require_valid(const MarketInstance& inst) {
  check_dimensions(inst);
  const ValidityReport report = validate_instance(inst);
  if (!report.ok()) throw InvalidInstance(report.issues.front());
}

}  // namespace

ValidityReport validate_instance(const MarketInstance& inst) {
  ValidityReport rep;
  auto flag = [&rep](std::string msg) { rep.issues.push_back(std::move(msg)); };
  const std::size_t n = inst.size();

  if (n == 0) flag("instance has no units");
  if (inst.bids.size() != n) {
    flag(fmt::format("dimension mismatch: {} bids for {} units", inst.bids.size(), n));
  }
  if (inst.maint.size() != n) {
    flag(fmt::format("dimension mismatch: {} maintenance flags for {} units", inst.maint.size(),
                     n));
  }
  if (inst.prev_gen && inst.prev_gen->size() != n) {
    flag(fmt::format("dimension mismatch: {} previous outputs for {} units",
                     inst.prev_gen->size(), n));
  }
  if (inst.ramps_enabled && !inst.prev_gen) flag("ramps enabled but no previous outputs given");
  if (!std::isfinite(inst.demand) || inst.demand < 0.0) {
    flag(fmt::format("demand {} is not a finite nonnegative value", inst.demand));
  }

  for (std::size_t i = 0; i < n; ++i) {
    const UnitParams& u = inst.units[i];
    if (!(u.g_min >= 0.0)) flag(fmt::format("unit {}: negative g_min {}", u.id, u.g_min));
    if (!(u.g_min <= u.g_max)) {
      flag(fmt::format("unit {}: g_min {} exceeds g_max {}", u.id, u.g_min, u.g_max));
    }
    if (!(u.marginal_cost > 0.0)) {
      flag(fmt::format("unit {}: marginal cost {} must be positive", u.id, u.marginal_cost));
    }
    if (!(u.maint_cost >= 0.0)) flag(fmt::format("unit {}: negative maintenance cost", u.id));
    if (u.maint_block < 1) flag(fmt::format("unit {}: maintenance block below 1", u.id));
    if (u.maint_required < 1) flag(fmt::format("unit {}: required maintenance below 1", u.id));
    if (!(u.k_max >= 1.0)) flag(fmt::format("unit {}: k_max {} below 1", u.id, u.k_max));
    if (!(u.ramp_up >= 0.0) || !(u.ramp_down >= 0.0)) {
      flag(fmt::format("unit {}: negative ramp limit", u.id));
    }
    if (i < inst.bids.size()) {
      const double k = inst.bids[i];
      if (!(k >= 1.0)) flag(fmt::format("unit {}: bid {} below 1", u.id, k));
      if (!(k <= u.k_max)) flag(fmt::format("unit {}: bid {} above k_max {}", u.id, k, u.k_max));
    }
    if (i < inst.maint.size() && inst.maint[i] > 1) {
      flag(fmt::format("unit {}: maintenance flag {} is not binary", u.id, inst.maint[i]));
    }
    if (inst.prev_gen && i < inst.prev_gen->size() && !((*inst.prev_gen)[i] >= 0.0)) {
      flag(fmt::format("unit {}: negative previous output", u.id));
    }
  }
  return rep;
}

UnitBounds effective_bounds(const MarketInstance& inst) {
  require_valid(inst);
  const std::size_t n = inst.size();
  UnitBounds b{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const UnitParams& u = inst.units[i];
    const double on = inst.maint[i] ? 0.0 : 1.0;
    b.lo[i] = on * u.g_min;
    b.hi[i] = on * u.g_max;
    if (inst.ramps_enabled) {
      const double prev = (*inst.prev_gen)[i];
      b.lo[i] = std::max(b.lo[i], prev - u.ramp_down);
      b.hi[i] = std::min(b.hi[i], prev + u.ramp_up);
      if (b.lo[i] > b.hi[i] + kBalanceTol) {
        throw InfeasibleDemand(fmt::format(
            "unit {}: ramp limits leave no admissible output (range [{}, {}])", u.id, b.lo[i],
            b.hi[i]));
      }
      b.hi[i] = std::max(b.hi[i], b.lo[i]);
    }
  }
  return b;
}

MarketOutcome clear_market(const MarketInstance& inst) {
  const UnitBounds b = effective_bounds(inst);
  const std::size_t n = inst.size();

  const double sum_lo = std::accumulate(b.lo.begin(), b.lo.end(), 0.0);
  const double sum_hi = std::accumulate(b.hi.begin(), b.hi.end(), 0.0);
  if (inst.demand > sum_hi + kBalanceTol || inst.demand < sum_lo - kBalanceTol) {
    throw InfeasibleDemand(fmt::format("demand {} MW outside the deliverable range [{}, {}] MW",
                                       inst.demand, sum_lo, sum_hi));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t c) { return inst.offer(a) < inst.offer(c); });

  MarketOutcome out;
  out.gen = b.lo;
  double remaining = inst.demand - sum_lo;
  std::ptrdiff_t last_raised = -1;
  for (std::size_t i : order) {
    if (remaining <= 1e-12) break;
    const double room = b.hi[i] - b.lo[i];
    if (room <= 0.0) continue;
    const double step = std::min(room, remaining);
    out.gen[i] += step;
    remaining -= step;
    last_raised = static_cast<std::ptrdiff_t>(i);
  }

  if (last_raised >= 0) {
    out.price = inst.offer(static_cast<std::size_t>(last_raised));
  } else {
    // Demand sits on the sum of lower bounds: take the cheapest unit that
    // could still move, falling back to any operating unit.
    bool found = false;
    for (int pass = 0; pass < 2 && !found; ++pass) {
      for (std::size_t i : order) {
        const bool movable = b.hi[i] - b.lo[i] > 0.0;
        if (!inst.maint[i] && (pass == 1 || movable)) {
          out.price = inst.offer(i);
          found = true;
          break;
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) out.total_cost += inst.offer(i) * out.gen[i];
  return out;
}

MarketOutcome lp_dispatch_oracle(const MarketInstance& inst) {
  require_valid(inst);
  const std::size_t n = inst.size();

  // Variables: g_i, upper slack s_i, lower surplus t_i (all >= 0).
  //   sum g = d;   g_i + s_i = hi_i;   g_i - t_i = lo_i
  const std::size_t cols = 3 * n;
  std::vector<std::vector<double>> a;
  std::vector<double> rhs;
  std::vector<double> cost(cols, 0.0);

  std::vector<double> balance(cols, 0.0);
  for (std::size_t i = 0; i < n; ++i) balance[i] = 1.0;
  a.push_back(balance);
  rhs.push_back(inst.demand);

  for (std::size_t i = 0; i < n; ++i) {
    const UnitParams& u = inst.units[i];
    double lo = inst.maint[i] ? 0.0 : u.g_min;
    double hi = inst.maint[i] ? 0.0 : u.g_max;
    if (inst.ramps_enabled) {
      lo = std::max(lo, (*inst.prev_gen)[i] - u.ramp_down);
      hi = std::min(hi, (*inst.prev_gen)[i] + u.ramp_up);
    }
    std::vector<double> upper(cols, 0.0);
    upper[i] = 1.0;
    upper[n + i] = 1.0;
    a.push_back(upper);
    rhs.push_back(hi);

    std::vector<double> lower(cols, 0.0);
    lower[i] = 1.0;
    lower[2 * n + i] = -1.0;
    a.push_back(lower);
    rhs.push_back(lo);

    cost[i] = inst.offer(i);
  }

  const lp::Solution sol = lp::solve_standard_form(a, rhs, cost);
  if (sol.status != lp::Status::Optimal) {
    throw InfeasibleDemand(
        fmt::format("reference LP has no feasible dispatch for demand {} MW", inst.demand));
  }
  MarketOutcome out;
  out.gen.assign(sol.x.begin(), sol.x.begin() + static_cast<std::ptrdiff_t>(n));
  out.price = sol.duals[0];
  out.total_cost = sol.objective;
  return out;
}

std::vector<std::string> check_kkt(const MarketInstance& inst, const MarketOutcome& out,
                                   double tol) {
  std::vector<std::string> bad;
  const UnitBounds b = effective_bounds(inst);
  const std::size_t n = inst.size();
  if (out.gen.size() != n) {
    bad.push_back("dispatch vector has wrong length");
    return bad;
  }

  const double total = std::accumulate(out.gen.begin(), out.gen.end(), 0.0);
  if (std::abs(total - inst.demand) > kBalanceTol) {
    bad.push_back(fmt::format("balance: dispatched {} MW vs demand {} MW", total, inst.demand));
  }

  bool price_matches_mover = false;
  bool any_mover = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = out.gen[i];
    const int id = inst.units[i].id;
    if (g < b.lo[i] - tol || g > b.hi[i] + tol) {
      bad.push_back(fmt::format("unit {}: output {} outside [{}, {}]", id, g, b.lo[i], b.hi[i]));
    }
    if (b.hi[i] - b.lo[i] <= tol) continue;
    any_mover = true;
    const double offer = inst.offer(i);
    const double scale = std::max(1.0, std::abs(offer));
    if (std::abs(offer - out.price) <= tol * scale) price_matches_mover = true;
    if (offer < out.price - tol * scale && g < b.hi[i] - tol) {
      bad.push_back(fmt::format("unit {}: offer {} below price {} but not at upper bound", id,
                                offer, out.price));
    }
    if (offer > out.price + tol * scale && g > b.lo[i] + tol) {
      bad.push_back(fmt::format("unit {}: offer {} above price {} but not at lower bound", id,
                                offer, out.price));
    }
  }
  if (any_mover && !price_matches_mover) {
    // Only acceptable when no unit is strictly inside its range.
    for (std::size_t i = 0; i < n; ++i) {
      if (out.gen[i] > b.lo[i] + tol && out.gen[i] < b.hi[i] - tol) {
        bad.push_back(fmt::format("price {} matches no offer although unit {} is marginal",
                                  out.price, inst.units[i].id));
        break;
      }
    }
  }
  return bad;
}

}  // namespace safebid::market
