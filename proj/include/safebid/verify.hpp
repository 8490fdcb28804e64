#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "safebid/market.hpp"
#include "safebid/mlp.hpp"
#include "safebid/safety.hpp"

namespace safebid::verify {

using Rng = std::mt19937_64;

struct SuiteResult {
  std::string name;
  int cases = 0;
  int failures = 0;
  double seconds = 0.0;
  double worst = 0.0;              // largest error seen, where meaningful
  std::vector<std::string> notes;  // first few failures

  bool passed() const { return cases > 0 && failures == 0; }
  void fail(std::string why);
};

// A random well-formed instance with N in [1, max_units] and demand inside
// the feasible range (sometimes exactly on its ends).
market::MarketInstance random_market(Rng& rng, bool ramps, int max_units = 6);

struct FilterCase {
  safety::FilterConfig cfg;
  safety::SafetyState state;
  std::vector<std::uint8_t> request;
};

// Up to three units and a lookahead of at most eight steps; the state is
// reached by replaying random requests through the exhaustive oracle.
FilterCase random_filter_case(Rng& rng, safety::Mode mode);

// clear_market against the simplex oracle, plus the optimality audit.
SuiteResult dispatch_equivalence(int count, std::uint64_t seed);
// filter_project against the exhaustive oracle: distance and decision.
SuiteResult filter_optimality(int count, std::uint64_t seed);
// For every u in {0,1}, x in 0..x_max, the product rows admit exactly z = u x.
SuiteResult big_m_exactness(int x_max, double big_m);
// Central differences against the analytic critic (TD loss) and actor
// (policy loss through the critic) gradients.
SuiteResult critic_gradient_check(int count, std::uint64_t seed);
SuiteResult actor_gradient_check(int count, std::uint64_t seed);
// Elementwise soft-update identity for each tau.
SuiteResult soft_update_algebra(const std::vector<double>& taus, std::uint64_t seed);

std::vector<SuiteResult> run_all(std::uint64_t seed);

// Relative error used by the gradient checks.
double relative_error(double analytic, double numeric);
inline constexpr double kGradTol = 1e-5;
inline constexpr double kFdStep = 1e-5;

}  // namespace safebid::verify
