#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace safebid::safety {

// intent:  every unit accrues >= H_i maintenance steps inside each
//          calendar window of W steps; every maximal maintenance run lasts
//          >= D_i steps.
// literal: the counter recursion x' = (1-u)(x+1) with x(E) >= H_i at the
//          lookahead end, plus the start-implies-later rule
//          u(s) - u(s-1) <= u(s+D-1).
// Both modes cap concurrent maintenance at M.
enum class Mode { Intent, Literal };

struct FilterConfig {
  Mode mode = Mode::Intent;
  int max_concurrent = 2;     // M
  int window = 100;           // W
  int horizon = 3000;         // last simulated step, 1-based
  std::vector<int> block;     // D_i
  std::vector<int> required;  // H_i

  std::size_t units() const { return block.size(); }
  int max_block() const;
};

// Throws InvalidFilterConfig.
void validate(const FilterConfig& cfg);

using Bits = std::vector<std::uint8_t>;
// schedule[i][j] is unit i's decision at step state.t + j.
using Schedule = std::vector<Bits>;

struct SafetyState {
  int t = 1;                          // step about to be decided, 1-based
  std::vector<int> since_maint;       // x_i: steps since the last maintenance step
  std::vector<int> block_progress;    // length of the maintenance run ending at t-1
  std::vector<int> window_coverage;   // maintenance steps so far in t's window
  std::vector<Bits> recent;           // last max_block() applied decisions, oldest first
};

SafetyState initial_state(const FilterConfig& cfg);

struct SafeDecision {
  Bits u;
  int distance = 0;  // Hamming distance to the request
  Schedule witness;  // one feasible continuation; column 0 equals u
};

// Last step the filter plans for when deciding step t: the end of t's
// coverage window, clipped to the horizon.
int lookahead_end(const FilterConfig& cfg, int t);

// True when the window containing t ends inside the horizon, i.e. its
// coverage requirement is enforced.
bool window_complete(const FilterConfig& cfg, int t);

// Nearest (Hamming) current-step decision that still admits a feasible
// schedule up to lookahead_end. Candidates of equal distance are ordered by
// flipping higher-index units first. Throws NoFeasibleCompletion.
SafeDecision filter_project(std::span<const std::uint8_t> request, const SafetyState& state,
                            const FilterConfig& cfg);

// A schedule for steps state.t .. lookahead_end whose first column is
// `committed`, or nullopt if none exists. Depth-first search over steps,
// most urgent units first, with memoised dead ends.
std::optional<Schedule> feasible_completion(const SafetyState& state,
                                            std::span<const std::uint8_t> committed,
                                            const FilterConfig& cfg);

SafetyState advance_state(const SafetyState& state, std::span<const std::uint8_t> applied,
                          const FilterConfig& cfg);

// Exhaustive reference for filter_project. Limited to three units and a
// lookahead of eight steps; throws InstanceTooLarge beyond that.
SafeDecision brute_force_filter_oracle(std::span<const std::uint8_t> request,
                                       const SafetyState& state, const FilterConfig& cfg);

inline constexpr int kOracleMaxUnits = 3;
inline constexpr int kOracleMaxSteps = 8;

}  // namespace safebid::safety
