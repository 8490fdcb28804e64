// Exhaustive reference for the maintenance filter.
//
// Every unit's row over the lookahead is one of 2^L bit patterns. Rows are
// checked against the per-unit rules by direct evaluation on the full
// decision sequence, then all row combinations are enumerated with a
// per-step concurrency count. Kept deliberately separate from the search in
// safety.cpp.

#include <array>
#include <bit>
#include <functional>
#include <optional>

#include <fmt/format.h>

#include "safebid/errors.hpp"
#include "safebid/safety.hpp"

namespace safebid::safety {

namespace {

// Decision of unit i at absolute step s, where s < t reads the history and
// s > end reads as idle.
struct Timeline {
  const Bits& hist;
  int t;
  int end;
  unsigned row;

  int at(int s) const {
    if (s < 1 || s > end) return 0;
    if (s >= t) return static_cast<int>((row >> (s - t)) & 1u);
    const int back = t - s;
    const int len = static_cast<int>(hist.size());
    if (back > len) return 0;
    return hist[static_cast<std::size_t>(len - back)];
  }
};

bool row_ok_intent(const FilterConfig& cfg, const SafetyState& st, std::size_t i, unsigned row,
                   int len) {
  const int d = cfg.block[i];
  // Lengths of maximal runs in [t-run0, t+len-1], where the history run
  // of length block_progress ends at t-1.
  int run = st.block_progress[i];
  for (int j = 0; j < len; ++j) {
    if ((row >> j) & 1u) {
      ++run;
    } else {
      if (run > 0 && run < d) return false;
      run = 0;
    }
  }
  if (run > 0 && run < d) return false;
  if (window_complete(cfg, st.t)) {
    const int got = st.window_coverage[i] + std::popcount(row);
    if (got < cfg.required[i]) return false;
  }
  return true;
}

bool row_ok_literal(const FilterConfig& cfg, const SafetyState& st, std::size_t i, unsigned row,
                    int end) {
  const int d = cfg.block[i];
  const int t = st.t;
  const Timeline u{st.recent[i], t, end, row};

  // x(t) from the state, then x(s+1) = (1 - u(s)) * x(s) + (1 - u(s)).
  long x = st.since_maint[i];
  for (int s = t; s < end; ++s) x = (1 - u.at(s)) * x + (1 - u.at(s));
  if (x < cfg.required[i]) return false;

  // u(s) - u(s-1) <= u(s+D-1) for every row whose right-hand side lies in
  // the lookahead or later.
  for (int s = std::max(1, t - d + 1); s <= end; ++s) {
    if (s + d - 1 < t) continue;
    if (u.at(s) - u.at(s - 1) > (s + d - 1 > end ? 0 : u.at(s + d - 1))) return false;
  }
  return true;
}

}  // namespace

SafeDecision brute_force_filter_oracle(std::span<const std::uint8_t> request,
                                       const SafetyState& state, const FilterConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.units();
  const int end = lookahead_end(cfg, state.t);
  const int len = end - state.t + 1;
  if (n > kOracleMaxUnits || len > kOracleMaxSteps) {
    throw InstanceTooLarge(fmt::format(
        "exhaustive filter oracle handles at most {} units and {} steps (got {} and {})",
        kOracleMaxUnits, kOracleMaxSteps, n, len));
  }
  if (request.size() != n) throw InvalidFilterConfig("request length does not match units");

  const unsigned rows = 1u << len;
  const unsigned full = rows - 1;
  // valid[i][first] = admissible rows of unit i whose first bit is `first`.
  std::vector<std::array<std::vector<unsigned>, 2>> valid(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (unsigned r = 0; r < rows; ++r) {
      const bool ok = cfg.mode == Mode::Intent ? row_ok_intent(cfg, state, i, r, len)
                                               : row_ok_literal(cfg, state, i, r, end);
      if (ok) valid[i][r & 1u].push_back(r);
    }
  }

  const int m = cfg.max_concurrent;
  // occ[c] = mask of steps already used by at least c+1 units.
  using Occupancy = std::array<unsigned, kOracleMaxUnits + 1>;
  auto add = [](Occupancy occ, unsigned r) {
    for (int c = kOracleMaxUnits; c >= 1; --c) occ[c] |= occ[c - 1] & r;
    occ[0] |= r;
    return occ;
  };

  // free_last[b][F]: the last unit has an admissible row starting with b
  // that avoids every step in mask F.
  const std::size_t last = n - 1;
  std::array<std::vector<std::uint8_t>, 2> free_last;
  for (unsigned b = 0; b < 2; ++b) {
    // within[S] = some admissible row is a subset of S.
    std::vector<std::uint8_t> within(rows, 0);
    for (unsigned r : valid[last][b]) within[r] = 1;
    for (int bit = 0; bit < len; ++bit) {
      for (unsigned s = 0; s < rows; ++s) {
        if ((s >> bit) & 1u) within[s] |= within[s ^ (1u << bit)];
      }
    }
    free_last[b].assign(rows, 0);
    for (unsigned f = 0; f < rows; ++f) free_last[b][f] = within[~f & full];
  }

  // Returns the rows of one feasible combination for first column `first`.
  auto extend = [&](unsigned first) -> std::optional<std::vector<unsigned>> {
    if (std::popcount(first) > m) return std::nullopt;
    std::vector<unsigned> pick(n);
    std::function<bool(std::size_t, const Occupancy&)> rec = [&](std::size_t i,
                                                                 const Occupancy& occ) -> bool {
      if (i == n) return true;
      const unsigned bit = (first >> i) & 1u;
      if (i == last) {
        const unsigned busy = occ[static_cast<std::size_t>(m - 1)] & full;
        if (!free_last[bit][busy]) return false;
        for (unsigned r : valid[i][bit]) {
          if ((r & busy) == 0) {
            pick[i] = r;
            return true;
          }
        }
        return false;
      }
      for (unsigned r : valid[i][bit]) {
        const Occupancy next = add(occ, r);
        if (next[static_cast<std::size_t>(m)] & full) continue;
        pick[i] = r;
        if (rec(i + 1, next)) return true;
      }
      return false;
    };
    if (rec(0, Occupancy{})) return pick;
    return std::nullopt;
  };

  unsigned want = 0;
  for (std::size_t i = 0; i < n; ++i) want |= static_cast<unsigned>(request[i] & 1u) << i;

  // Preference: smaller distance, then the flip set whose indices, read
  // from highest to lowest, are lexicographically larger.
  auto better = [&](unsigned a, unsigned b) {
    const unsigned fa = a ^ want;
    const unsigned fb = b ^ want;
    const int da = std::popcount(fa);
    const int db = std::popcount(fb);
    if (da != db) return da < db;
    for (int i = static_cast<int>(n) - 1; i >= 0; --i) {
      const unsigned ba = (fa >> i) & 1u;
      const unsigned bb = (fb >> i) & 1u;
      if (ba != bb) return ba > bb;
    }
    return false;
  };

  std::optional<unsigned> best;
  std::vector<unsigned> best_rows;
  for (unsigned cand = 0; cand < (1u << n); ++cand) {
    if (best && !better(cand, *best)) continue;
    if (auto rows_found = extend(cand)) {
      best = cand;
      best_rows = std::move(*rows_found);
    }
  }
  if (!best) {
    throw NoFeasibleCompletion(
        fmt::format("exhaustive search found no feasible schedule from step {}", state.t));
  }

  SafeDecision out;
  out.u.resize(n);
  out.witness.assign(n, Bits(static_cast<std::size_t>(len), 0));
  for (std::size_t i = 0; i < n; ++i) {
    out.u[i] = static_cast<std::uint8_t>((*best >> i) & 1u);
    for (int j = 0; j < len; ++j) out.witness[i][j] = static_cast<std::uint8_t>((best_rows[i] >> j) & 1u);
  }
  out.distance = std::popcount(*best ^ want);
  return out;
}

}  // namespace safebid::safety
