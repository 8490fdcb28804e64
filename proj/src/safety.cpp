#include "safebid/safety.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <unordered_set>

#include <fmt/format.h>

#include "safebid/errors.hpp"

namespace safebid::safety {

int FilterConfig::max_block() const {
  return block.empty() ? 1 : *std::max_element(block.begin(), block.end());
}

void validate(const FilterConfig& cfg) {
  const std::size_t n = cfg.units();
  if (n == 0) throw InvalidFilterConfig("filter needs at least one unit");
  if (cfg.required.size() != n) {
    throw InvalidFilterConfig(fmt::format("{} block lengths but {} coverage requirements", n,
                                          cfg.required.size()));
  }
  if (cfg.max_concurrent < 1 || cfg.max_concurrent > static_cast<int>(n)) {
    throw InvalidFilterConfig(
        fmt::format("max concurrent maintenance {} outside [1, {}]", cfg.max_concurrent, n));
  }
  if (cfg.window < 1) throw InvalidFilterConfig("coverage window must be at least 1 step");
  if (cfg.horizon < 1) throw InvalidFilterConfig("horizon must be at least 1 step");
  for (std::size_t i = 0; i < n; ++i) {
    if (cfg.block[i] < 1 || cfg.block[i] > cfg.window || cfg.block[i] > 63) {
      throw InvalidFilterConfig(fmt::format(
          "unit {}: block length {} outside [1, min(window, 63)]", i + 1, cfg.block[i]));
    }
    if (cfg.required[i] < 1 || cfg.required[i] > cfg.window) {
      throw InvalidFilterConfig(fmt::format("unit {}: required maintenance {} outside [1, {}]",
                                            i + 1, cfg.required[i], cfg.window));
    }
  }
}

SafetyState initial_state(const FilterConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.units();
  SafetyState s;
  s.t = 1;
  s.since_maint.assign(n, 0);
  s.block_progress.assign(n, 0);
  s.window_coverage.assign(n, 0);
  s.recent.assign(n, Bits(static_cast<std::size_t>(cfg.max_block()), 0));
  return s;
}

int lookahead_end(const FilterConfig& cfg, int t) {
  const int window_end = ((t - 1) / cfg.window + 1) * cfg.window;
  return std::min(window_end, std::max(cfg.horizon, t));
}

bool window_complete(const FilterConfig& cfg, int t) {
  return ((t - 1) / cfg.window + 1) * cfg.window <= cfg.horizon;
}

namespace {

void check_state(const SafetyState& st, const FilterConfig& cfg) {
  const std::size_t n = cfg.units();
  if (st.since_maint.size() != n || st.block_progress.size() != n ||
      st.window_coverage.size() != n || st.recent.size() != n) {
    throw InvalidFilterConfig(fmt::format("safety state does not describe {} units", n));
  }
  if (st.t < 1) throw InvalidFilterConfig("safety state step index must be >= 1");
  for (const Bits& r : st.recent) {
    if (static_cast<int>(r.size()) < cfg.max_block()) {
      throw InvalidFilterConfig("safety state history shorter than the longest block");
    }
  }
}

void check_bits(std::span<const std::uint8_t> v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw InvalidFilterConfig(fmt::format("{} has {} entries for {} units", what, v.size(), n));
  }
  for (std::uint8_t b : v) {
    if (b > 1) throw InvalidFilterConfig(fmt::format("{} is not binary", what));
  }
}

// Per-unit constraint tracker. Fields are reused by both modes:
//   intent:  a = coverage still owed, b = current run length (capped at D)
//   literal: a = counter x (capped at H), b = previous decision,
//            mask bit j = step s+j is obliged to be 1
struct Track {
  int a = 0;
  int b = 0;
  std::uint64_t mask = 0;
};

class Rules {
 public:
  Rules(const FilterConfig& cfg, const SafetyState& st)
      : cfg_(cfg), st_(st), end_(lookahead_end(cfg, st.t)), complete_(window_complete(cfg, st.t)) {}

  int end() const { return end_; }

  Track start(std::size_t i) const {
    Track tr;
    const int d = cfg_.block[i];
    const int h = cfg_.required[i];
    if (cfg_.mode == Mode::Intent) {
      tr.a = complete_ ? std::max(0, h - st_.window_coverage[i]) : 0;
      tr.b = std::min(st_.block_progress[i], d);
      return tr;
    }
    const Bits& hist = st_.recent[i];
    const int len = static_cast<int>(hist.size());
    // hist[len-1] is step t-1, hist[len-k] is step t-k; steps < 1 read as 0.
    auto past = [&](int step) -> int {
      const int back = st_.t - step;
      if (step < 1 || back < 1 || back > len) return 0;
      return hist[static_cast<std::size_t>(len - back)];
    };
    tr.a = std::min(st_.since_maint[i], h);
    tr.b = past(st_.t - 1);
    for (int s = st_.t - d + 1; s <= st_.t - 1; ++s) {
      if (s >= 1 && past(s) == 1 && past(s - 1) == 0) tr.mask |= std::uint64_t{1} << (s + d - 1 - st_.t);
    }
    return tr;
  }

  bool forced(std::size_t i, const Track& tr) const {
    if (cfg_.mode == Mode::Intent) return tr.b > 0 && tr.b < cfg_.block[i];
    return (tr.mask & 1u) != 0;
  }

  // Applies decision u at step s. Returns false on a violated rule.
  bool step(std::size_t i, Track& tr, int s, bool u) const {
    const int d = cfg_.block[i];
    if (cfg_.mode == Mode::Intent) {
      if (u) {
        tr.b = std::min(tr.b + 1, d);
        tr.a = std::max(0, tr.a - 1);
      } else {
        if (tr.b > 0 && tr.b < d) return false;
        tr.b = 0;
      }
      return true;
    }
    const int h = cfg_.required[i];
    if (s == end_ && tr.a < h) return false;
    if ((tr.mask & 1u) && !u) return false;
    std::uint64_t mask = tr.mask;
    if (u && !tr.b && d > 1) {
      if (s + d - 1 > end_) return false;
      mask |= std::uint64_t{1} << (d - 1);
    }
    tr.mask = mask >> 1;
    tr.a = u ? 0 : std::min(tr.a + 1, h);
    tr.b = u ? 1 : 0;
    return true;
  }

  bool accept(std::size_t i, const Track& tr) const {
    if (cfg_.mode == Mode::Intent) return tr.a == 0 && !(tr.b > 0 && tr.b < cfg_.block[i]);
    return tr.mask == 0;
  }

  // Lower bound on maintenance steps unit i still has to take.
  int min_work(std::size_t i, const Track& tr) const {
    if (cfg_.mode == Mode::Literal) return std::popcount(tr.mask);
    const int d = cfg_.block[i];
    if (tr.b > 0 && tr.b < d) return std::max(tr.a, d - tr.b);
    if (tr.a > 0 && tr.b == 0) return std::max(tr.a, d);
    return tr.a;
  }

  // Units worth switching on voluntarily at a step.
  bool useful(std::size_t i, const Track& tr) const {
    if (cfg_.mode == Mode::Literal) return true;
    (void)i;
    return tr.a > 0;
  }

  Mode mode() const { return cfg_.mode; }

 private:
  const FilterConfig& cfg_;
  const SafetyState& st_;
  int end_;
  bool complete_;
};

struct KeyHash {
  std::size_t operator()(const std::vector<std::uint64_t>& k) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (std::uint64_t v : k) {
      h ^= std::hash<std::uint64_t>{}(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

// Calls fn on each combination of `size` elements of pool, in
// lexicographic order of positions. Stops when fn returns true.
bool for_each_combination(const std::vector<std::size_t>& pool, std::size_t size,
                          const std::function<bool(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> pick;
  std::function<bool(std::size_t)> rec = [&](std::size_t from) -> bool {
    if (pick.size() == size) return fn(pick);
    for (std::size_t p = from; p + (size - pick.size()) <= pool.size(); ++p) {
      pick.push_back(pool[p]);
      if (rec(p + 1)) return true;
      pick.pop_back();
    }
    return false;
  };
  return rec(0);
}

class Search {
 public:
  Search(const Rules& rules, const FilterConfig& cfg, int first_step, Schedule& sched)
      : rules_(rules), cfg_(cfg), n_(cfg.units()), first_(first_step), sched_(sched) {}

  bool run(int s, const std::vector<Track>& tracks) {
    if (s > rules_.end()) {
      for (std::size_t i = 0; i < n_; ++i) {
        if (!rules_.accept(i, tracks[i])) return false;
      }
      return true;
    }
    std::vector<std::uint64_t> key;
    key.reserve(1 + 2 * n_);
    key.push_back(static_cast<std::uint64_t>(s));
    for (const Track& tr : tracks) {
      key.push_back(static_cast<std::uint64_t>(tr.a) | (static_cast<std::uint64_t>(tr.b) << 32));
      key.push_back(tr.mask);
    }
    if (dead_.contains(key)) return false;

    const int left = rules_.end() - s + 1;
    long total = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const int w = rules_.min_work(i, tracks[i]);
      if (w > left) return fail(std::move(key));
      total += w;
    }
    if (total > static_cast<long>(cfg_.max_concurrent) * left) return fail(std::move(key));

    std::vector<std::size_t> on;
    std::vector<std::size_t> optional;
    for (std::size_t i = 0; i < n_; ++i) {
      if (rules_.forced(i, tracks[i])) {
        on.push_back(i);
      } else if (rules_.useful(i, tracks[i])) {
        optional.push_back(i);
      }
    }
    const int cap = cfg_.max_concurrent - static_cast<int>(on.size());
    if (cap < 0) return fail(std::move(key));

    if (rules_.mode() == Mode::Intent) {
      // Most outstanding work first, then index.
      std::stable_sort(optional.begin(), optional.end(), [&](std::size_t x, std::size_t y) {
        return rules_.min_work(x, tracks[x]) > rules_.min_work(y, tracks[y]);
      });
    }
    const std::size_t most = std::min<std::size_t>(static_cast<std::size_t>(cap), optional.size());
    const std::size_t col = static_cast<std::size_t>(s - first_);

    auto attempt = [&](const std::vector<std::size_t>& extra) -> bool {
      std::vector<std::uint8_t> bits(n_, 0);
      for (std::size_t i : on) bits[i] = 1;
      for (std::size_t i : extra) bits[i] = 1;
      std::vector<Track> next = tracks;
      for (std::size_t i = 0; i < n_; ++i) {
        if (!rules_.step(i, next[i], s, bits[i] != 0)) return false;
      }
      for (std::size_t i = 0; i < n_; ++i) sched_[i][col] = bits[i];
      return run(s + 1, next);
    };

    // Intent mode tries the largest subsets first (schedule owed work as
    // early as possible); literal mode prefers staying idle.
    for (std::size_t k = 0; k <= most; ++k) {
      const std::size_t size = rules_.mode() == Mode::Intent ? most - k : k;
      if (for_each_combination(optional, size, attempt)) return true;
    }
    return fail(std::move(key));
  }

 private:
  bool fail(std::vector<std::uint64_t> key) {
    dead_.insert(std::move(key));
    return false;
  }

  const Rules& rules_;
  const FilterConfig& cfg_;
  std::size_t n_;
  int first_;
  Schedule& sched_;
  std::unordered_set<std::vector<std::uint64_t>, KeyHash> dead_;
};

}  // namespace

std::optional<Schedule> feasible_completion(const SafetyState& state,
                                            std::span<const std::uint8_t> committed,
                                            const FilterConfig& cfg) {
  validate(cfg);
  check_state(state, cfg);
  const std::size_t n = cfg.units();
  check_bits(committed, n, "committed decision");

  const Rules rules(cfg, state);
  const int t = state.t;
  const int end = rules.end();

  int active = 0;
  for (std::uint8_t b : committed) active += b;
  if (active > cfg.max_concurrent) return std::nullopt;

  std::vector<Track> tracks(n);
  for (std::size_t i = 0; i < n; ++i) {
    tracks[i] = rules.start(i);
    if (!rules.step(i, tracks[i], t, committed[i] != 0)) return std::nullopt;
  }

  Schedule sched(n, Bits(static_cast<std::size_t>(end - t + 1), 0));
  for (std::size_t i = 0; i < n; ++i) sched[i][0] = committed[i];
  Search search(rules, cfg, t, sched);
  if (!search.run(t + 1, tracks)) return std::nullopt;
  return sched;
}

SafeDecision filter_project(std::span<const std::uint8_t> request, const SafetyState& state,
                            const FilterConfig& cfg) {
  validate(cfg);
  check_state(state, cfg);
  const std::size_t n = cfg.units();
  check_bits(request, n, "maintenance request");

  // Flip sets of a given size, ordered so that sets flipping higher unit
  // indices come first (compare index lists sorted high to low).
  std::vector<std::size_t> desc(n);
  for (std::size_t i = 0; i < n; ++i) desc[i] = n - 1 - i;

  std::optional<SafeDecision> found;
  for (std::size_t dist = 0; dist <= n && !found; ++dist) {
    for_each_combination(desc, dist, [&](const std::vector<std::size_t>& flips) {
      Bits cand(request.begin(), request.end());
      for (std::size_t i : flips) cand[i] ^= 1u;
      auto sched = feasible_completion(state, cand, cfg);
      if (!sched) return false;
      found = SafeDecision{cand, static_cast<int>(dist), std::move(*sched)};
      return true;
    });
  }
  if (!found) {
    throw NoFeasibleCompletion(fmt::format(
        "no maintenance decision at step {} admits a feasible schedule through step {}", state.t,
        lookahead_end(cfg, state.t)));
  }
  return *found;
}

SafetyState advance_state(const SafetyState& state, std::span<const std::uint8_t> applied,
                          const FilterConfig& cfg) {
  check_state(state, cfg);
  const std::size_t n = cfg.units();
  check_bits(applied, n, "applied decision");

  SafetyState next = state;
  const bool window_closes = state.t % cfg.window == 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int u = applied[i];
    next.since_maint[i] = (1 - u) * state.since_maint[i] + (1 - u);
    next.block_progress[i] = u ? state.block_progress[i] + 1 : 0;
    next.window_coverage[i] = window_closes ? 0 : state.window_coverage[i] + u;
    Bits& hist = next.recent[i];
    hist.erase(hist.begin());
    hist.push_back(static_cast<std::uint8_t>(u));
  }
  next.t = state.t + 1;
  return next;
}

}  // namespace safebid::safety
