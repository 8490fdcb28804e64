#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace safebid::market {

// Static parameters of one generation unit.
struct UnitParams {
  int id = 1;                  // 1-based
  double marginal_cost = 1.0;  // $/MWh
  double g_max = 0.0;          // MW
  double g_min = 0.0;          // MW
  double ramp_up = 1e9;        // MW per step
  double ramp_down = 1e9;      // MW per step
  double maint_cost = 0.0;     // $ per maintenance step
  int maint_block = 1;         // minimum length of one maintenance run, steps
  int maint_required = 1;      // maintenance steps required per coverage window
  double k_max = 2.0;          // upper limit of the bid multiplier
};

// The six-unit system used throughout the case study.
std::vector<UnitParams> case_study_units();

struct MarketInstance {
  std::vector<UnitParams> units;
  std::vector<double> bids;         // multipliers k_i in [1, k_max]
  std::vector<std::uint8_t> maint;  // 1 = unit is in maintenance
  double demand = 0.0;              // MW
  std::optional<std::vector<double>> prev_gen;
  bool ramps_enabled = false;

  std::size_t size() const { return units.size(); }
  double offer(std::size_t i) const { return bids[i] * units[i].marginal_cost; }
};

struct MarketOutcome {
  std::vector<double> gen;  // MW
  double price = 0.0;       // uniform clearing price, $/MWh
  double total_cost = 0.0;  // sum of offer * gen
};

// Structural problems with an instance. Empty means well-formed.
struct ValidityReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

ValidityReport validate_instance(const MarketInstance& inst);

// Operating bounds of each unit after outages and (if enabled) ramp limits.
struct UnitBounds {
  std::vector<double> lo;
  std::vector<double> hi;
};

// Throws DimensionMismatch / InvalidInstance for malformed input and
// InfeasibleDemand when ramp limits leave an empty range for some unit.
UnitBounds effective_bounds(const MarketInstance& inst);

// Minimum-cost dispatch meeting demand, with the clearing price.
//
// Units with equal offers are loaded in ascending index order. The price is
// the offer of the last unit raised above its lower bound; when demand sits
// exactly on the sum of lower bounds the cheapest operating offer is used.
MarketOutcome clear_market(const MarketInstance& inst);

// Independent reference solution of the same LP by a dense two-phase
// tableau simplex. Price is the dual of the balance row. Meant for small N.
MarketOutcome lp_dispatch_oracle(const MarketInstance& inst);

// Tolerances used when auditing a solution.
inline constexpr double kBalanceTol = 1e-9;

// Lists violated optimality/feasibility conditions of a claimed solution:
// balance, bounds, and complementary slackness of the price against each
// unit's position within its bounds.
std::vector<std::string> check_kkt(const MarketInstance& inst, const MarketOutcome& out,
                                   double tol = 1e-9);

}  // namespace safebid::market
