#include "safebid/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "safebid/ddpg.hpp"
#include "safebid/errors.hpp"
#include "safebid/milp.hpp"

namespace safebid::verify {

void SuiteResult::fail(std::string why) {
  ++failures;
  if (notes.size() < 5) notes.push_back(std::move(why));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool chance(Rng& rng, double p) { return uniform(rng, 0.0, 1.0) < p; }

}  // namespace

market::MarketInstance random_market(Rng& rng, bool ramps, int max_units) {
  static const double kTiedCosts[] = {1.0, 1.5, 2.0, 2.5, 3.0};
  for (;;) {
    market::MarketInstance inst;
    const int n = uniform_int(rng, 1, max_units);
    std::vector<double> prev;
    for (int i = 0; i < n; ++i) {
      market::UnitParams u;
      u.id = i + 1;
      u.marginal_cost = chance(rng, 0.5) ? kTiedCosts[uniform_int(rng, 0, 4)] : uniform(rng, 0.5, 4.0);
      u.g_min = chance(rng, 0.3) ? 0.0 : uniform(rng, 0.0, 10.0);
      u.g_max = chance(rng, 0.1) ? u.g_min : u.g_min + uniform(rng, 0.0, 80.0);
      u.k_max = 2.0;
      u.ramp_up = uniform(rng, 5.0, 60.0);
      u.ramp_down = uniform(rng, 5.0, 60.0);
      inst.units.push_back(u);
      inst.bids.push_back(chance(rng, 0.3) ? 1.0 : uniform(rng, 1.0, 2.0));
      const bool out = chance(rng, 0.2);
      inst.maint.push_back(out ? 1 : 0);
      prev.push_back(out ? uniform(rng, 0.0, std::min(u.ramp_down, u.g_max))
                         : uniform(rng, u.g_min, u.g_max));
    }
    inst.ramps_enabled = ramps;
    if (ramps) inst.prev_gen = prev;
    market::UnitBounds b;
    try {
      b = market::effective_bounds(inst);
    } catch (const InfeasibleDemand&) {
      continue;
    }
    const double lo = std::accumulate(b.lo.begin(), b.lo.end(), 0.0);
    const double hi = std::accumulate(b.hi.begin(), b.hi.end(), 0.0);
    const double pick = uniform(rng, 0.0, 1.0);
    inst.demand = pick < 0.1 ? lo : pick < 0.2 ? hi : uniform(rng, lo, hi);
    return inst;
  }
}

FilterCase random_filter_case(Rng& rng, safety::Mode mode) {
  FilterCase fc;
  const int n = uniform_int(rng, 1, safety::kOracleMaxUnits);
  safety::FilterConfig& cfg = fc.cfg;
  cfg.mode = mode;
  cfg.window = uniform_int(rng, 2, safety::kOracleMaxSteps);
  cfg.max_concurrent = uniform_int(rng, 1, n);
  for (int i = 0; i < n; ++i) {
    cfg.block.push_back(uniform_int(rng, 1, std::min(3, cfg.window)));
    cfg.required.push_back(uniform_int(rng, 1, std::min(3, cfg.window)));
  }
  const int history = uniform_int(rng, 0, 2 * cfg.window);
  cfg.horizon = uniform_int(rng, std::max(1, history - 1), history + 2 * cfg.window);

  fc.state = safety::initial_state(cfg);
  for (int s = 0; s < history; ++s) {
    std::vector<std::uint8_t> req(static_cast<std::size_t>(n));
    for (auto& b : req) b = chance(rng, 0.3) ? 1 : 0;
    try {
      const safety::SafeDecision d = safety::brute_force_filter_oracle(req, fc.state, cfg);
      fc.state = safety::advance_state(fc.state, d.u, cfg);
    } catch (const NoFeasibleCompletion&) {
      break;
    }
  }
  fc.request.resize(static_cast<std::size_t>(n));
  for (auto& b : fc.request) b = chance(rng, 0.4) ? 1 : 0;
  return fc;
}

SuiteResult dispatch_equivalence(int count, std::uint64_t seed) {
  SuiteResult r;
  r.name = "dispatch_equivalence";
  const auto t0 = Clock::now();
  Rng rng(seed);
  for (int c = 0; c < count; ++c) {
    const market::MarketInstance inst = random_market(rng, c % 2 == 1);
    ++r.cases;
    try {
      const market::MarketOutcome a = market::clear_market(inst);
      const market::MarketOutcome b = market::lp_dispatch_oracle(inst);
      const double gap = std::abs(a.total_cost - b.total_cost);
      r.worst = std::max(r.worst, gap);
      if (gap > 1e-9) {
        r.fail(fmt::format("case {}: cost {} vs oracle {}", c, a.total_cost, b.total_cost));
        continue;
      }
      const auto bad = market::check_kkt(inst, a);
      if (!bad.empty()) r.fail(fmt::format("case {}: {}", c, bad.front()));
    } catch (const Error& e) {
      r.fail(fmt::format("case {}: {}: {}", c, e.kind(), e.what()));
    }
  }
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult filter_optimality(int count, std::uint64_t seed) {
  SuiteResult r;
  r.name = "filter_optimality";
  const auto t0 = Clock::now();
  Rng rng(seed);
  for (int c = 0; c < count; ++c) {
    const FilterCase fc =
        random_filter_case(rng, c % 2 == 0 ? safety::Mode::Intent : safety::Mode::Literal);
    ++r.cases;
    std::optional<safety::SafeDecision> got, want;
    try {
      got = safety::filter_project(fc.request, fc.state, fc.cfg);
    } catch (const NoFeasibleCompletion&) {
    }
    try {
      want = safety::brute_force_filter_oracle(fc.request, fc.state, fc.cfg);
    } catch (const NoFeasibleCompletion&) {
    }
    if (got.has_value() != want.has_value()) {
      r.fail(fmt::format("case {}: feasibility disagrees (filter {}, oracle {})", c,
                         got.has_value(), want.has_value()));
      continue;
    }
    if (!got) continue;
    if (got->distance != want->distance) {
      r.fail(fmt::format("case {}: distance {} vs oracle {}", c, got->distance, want->distance));
    } else if (got->u != want->u) {
      r.fail(fmt::format("case {}: same distance, different decision", c));
    }
  }
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult big_m_exactness(int x_max, double big_m) {
  SuiteResult r;
  r.name = "big_m_exactness";
  const auto t0 = Clock::now();
  safety::FilterConfig cfg;
  cfg.window = 2;
  cfg.horizon = 2;
  cfg.max_concurrent = 1;
  cfg.block = {1};
  cfg.required = {1};
  const safety::SafetyState st = safety::initial_state(cfg);
  const std::uint8_t request[] = {0};
  const safety::MilpModel m = safety::big_m_expand(cfg, st, request, big_m);
  const int zv = m.index_of(safety::z_name(0, 1));
  const int uv = m.index_of(safety::u_name(0, 1));
  const int xv = m.index_of(safety::x_name(0, 1));
  std::vector<const safety::Constraint*> rows;
  for (const auto& row : m.rows) {
    if (row.name.rfind("bigm_", 0) == 0 && row.name.size() > 5 &&
        row.name.substr(row.name.size() - 4) == "_1_1") {
      rows.push_back(&row);
    }
  }
  if (zv < 0 || uv < 0 || xv < 0 || rows.size() != 4) {
    r.fail("expanded model lacks the product variables or rows");
    r.cases = 1;
    return r;
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int u = 0; u <= 1; ++u) {
    for (int x = 0; x <= x_max; ++x) {
      ++r.cases;
      // Each row is linear in z; intersect the half-lines it allows.
      double lo = -kInf, hi = kInf;
      bool empty = false;
      for (const auto* row : rows) {
        double a = 0.0, rest = 0.0;
        for (const auto& term : row->terms) {
          if (term.var == zv) a += term.coef;
          else if (term.var == uv) rest += term.coef * u;
          else if (term.var == xv) rest += term.coef * x;
        }
        const double rhs = row->rhs - rest;
        if (a == 0.0) {
          const bool ok = row->sense == safety::Sense::LessEq    ? 0.0 <= rhs
                          : row->sense == safety::Sense::GreaterEq ? 0.0 >= rhs
                                                                   : rhs == 0.0;
          empty = empty || !ok;
          continue;
        }
        const double bound = rhs / a;
        const bool upper = (row->sense == safety::Sense::LessEq) == (a > 0.0);
        if (row->sense == safety::Sense::Equal) {
          lo = std::max(lo, bound);
          hi = std::min(hi, bound);
        } else if (upper) {
          hi = std::min(hi, bound);
        } else {
          lo = std::max(lo, bound);
        }
      }
      const double product = static_cast<double>(u * x);
      if (empty || lo > hi) {
        r.fail(fmt::format("u={} x={}: no z admitted", u, x));
      } else if (lo != product || hi != product) {
        r.fail(fmt::format("u={} x={}: admitted z in [{}, {}], expected only {}", u, x, lo, hi,
                           product));
      }
    }
  }
  r.seconds = seconds_since(t0);
  return r;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

namespace {

constexpr double kKinkMargin = 1e-3;
constexpr double kKMax = 2.0;
constexpr double kPenalty = 1.0;

// Smallest |pre-activation| over the hidden layers for the given inputs.
double kink_distance(const nn::MlpParams& p, const Eigen::MatrixXd& x) {
  double closest = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
    Eigen::MatrixXd z = p.layers[l].w * a;
    z.colwise() += p.layers[l].b;
    closest = std::min(closest, z.cwiseAbs().minCoeff());
    a = z.cwiseMax(0.0);
  }
  return closest;
}

void random_fill(nn::MlpParams& p, Rng& rng) { nn::init_uniform(p, -1.0, 1.0, rng); }

void compare_flat(SuiteResult& r, const nn::MlpGradients& g, std::size_t count,
                  const std::function<double(std::size_t)>& numeric, int c, const char* what) {
  nn::MlpParams view{g.layers};
  for (std::size_t k = 0; k < count; ++k) {
    const double n = numeric(k);
    const double a = view.param(k);
    const double e = relative_error(a, n);
    r.worst = std::max(r.worst, e);
    if (e > kGradTol) {
      r.fail(fmt::format("config {}: {} parameter {} analytic {} numeric {}", c, what, k, a, n));
      return;
    }
  }
}

}  // namespace

SuiteResult critic_gradient_check(int count, std::uint64_t seed) {
  SuiteResult r;
  r.name = "critic_gradient_check";
  const auto t0 = Clock::now();
  Rng rng(seed);
  for (int c = 0; c < count;) {
    ddpg::DdpgConfig cfg;
    cfg.hidden1 = uniform_int(rng, 2, 8);
    cfg.hidden2 = uniform_int(rng, 2, 8);
    cfg.gamma = uniform(rng, 0.0, 0.99);
    ddpg::AgentBrain brain(cfg, 2.0);
    random_fill(brain.actor, rng);
    random_fill(brain.target_actor, rng);
    random_fill(brain.critic, rng);
    random_fill(brain.target_critic, rng);
    std::vector<ddpg::Experience> batch;
    for (int j = 0; j < 4; ++j) {
      ddpg::Experience e;
      e.s = {uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)};
      e.s_next = {uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)};
      e.a = {static_cast<std::uint8_t>(chance(rng, 0.5)), uniform(rng, 1.0, 2.0)};
      e.r = uniform(rng, -100.0, 100.0);
      batch.push_back(e);
    }
    Eigen::MatrixXd x(4, 4);
    for (int j = 0; j < 4; ++j) {
      x.col(j) << batch[j].s.price, batch[j].s.demand, batch[j].a.u, batch[j].a.k;
    }
    if (kink_distance(brain.critic, x) < kKinkMargin) continue;
    ++c;
    ++r.cases;
    const ddpg::LossGradients lg = ddpg::critic_loss_gradients(brain, batch);
    auto numeric = [&](std::size_t k) {
      ddpg::AgentBrain probe = brain;
      const double base = probe.critic.param(k);
      probe.critic.param(k) = base + kFdStep;
      const double up = ddpg::critic_loss_gradients(probe, batch).loss;
      probe.critic.param(k) = base - kFdStep;
      const double down = ddpg::critic_loss_gradients(probe, batch).loss;
      return (up - down) / (2.0 * kFdStep);
    };
    compare_flat(r, lg.grads, brain.critic.param_count(), numeric, c, "critic");
  }
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult actor_gradient_check(int count, std::uint64_t seed) {
  SuiteResult r;
  r.name = "actor_gradient_check";
  const auto t0 = Clock::now();
  Rng rng(seed);
  for (int c = 0; c < count;) {
    const int h1 = uniform_int(rng, 2, 8), h2 = uniform_int(rng, 2, 8);
    nn::MlpParams actor = nn::make_mlp(2, h1, h2, 2);
    nn::MlpParams critic = nn::make_mlp(4, uniform_int(rng, 2, 8), uniform_int(rng, 2, 8), 1);
    random_fill(actor, rng);
    random_fill(critic, rng);
    // Alternate between bid heads mostly inside and mostly outside [1, k_max].
    if (c % 2 == 0) actor.layers.back().b(0) += 1.5;
    Eigen::MatrixXd s(2, 4);
    for (Eigen::Index j = 0; j < s.cols(); ++j) s.col(j) << uniform(rng, 0, 1), uniform(rng, 0, 1);

    const Eigen::MatrixXd out = nn::mlp_forward_batch(actor, s);
    Eigen::MatrixXd a(2, s.cols());
    bool near_edge = false;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const double k = out(0, j);
      near_edge = near_edge || std::abs(k - 1.0) < kKinkMargin || std::abs(k - kKMax) < kKinkMargin;
      a.col(j) << ddpg::sigmoid(out(1, j)), std::clamp(k, 1.0, kKMax);
    }
    if (near_edge || kink_distance(actor, s) < kKinkMargin ||
        kink_distance(critic, ddpg::critic_input(s, a)) < kKinkMargin) {
      continue;
    }
    ++c;
    ++r.cases;
    const ddpg::CriticModel model = ddpg::mlp_critic(critic);
    const ddpg::LossGradients lg = ddpg::actor_loss_gradients(actor, model, s, kKMax, kPenalty);
    auto numeric = [&](std::size_t k) {
      nn::MlpParams probe = actor;
      const double base = probe.param(k);
      probe.param(k) = base + kFdStep;
      const double up = ddpg::actor_loss_gradients(probe, model, s, kKMax, kPenalty).loss;
      probe.param(k) = base - kFdStep;
      const double down = ddpg::actor_loss_gradients(probe, model, s, kKMax, kPenalty).loss;
      return (up - down) / (2.0 * kFdStep);
    };
    compare_flat(r, lg.grads, actor.param_count(), numeric, c, "actor");
  }
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult soft_update_algebra(const std::vector<double>& taus, std::uint64_t seed) {
  SuiteResult r;
  r.name = "soft_update_algebra";
  const auto t0 = Clock::now();
  Rng rng(seed);
  for (double tau : taus) {
    for (int rep = 0; rep < 20; ++rep) {
      ++r.cases;
      nn::MlpParams b = nn::make_mlp(2, 5, 4, 2), t = nn::make_mlp(2, 5, 4, 2);
      nn::init_uniform(b, -3.0, 3.0, rng);
      nn::init_uniform(t, -3.0, 3.0, rng);
      const nn::MlpParams out = nn::soft_update(b, t, tau);
      for (std::size_t k = 0; k < b.param_count(); ++k) {
        const double want = (1.0 - tau) * b.param(k) + tau * t.param(k);
        const double got = out.param(k);
        const double err = std::abs(got - want);
        r.worst = std::max(r.worst, err);
        const bool exact_end = (tau == 0.0 && got != b.param(k)) || (tau == 1.0 && got != t.param(k));
        if (exact_end || err > std::numeric_limits<double>::epsilon() * std::abs(want)) {
          r.fail(fmt::format("tau {}: parameter {} is {} expected {}", tau, k, got, want));
          break;
        }
      }
    }
  }
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
  return {
      dispatch_equivalence(600, seed),
      filter_optimality(300, seed + 1),
      big_m_exactness(100, 1000.0),
      critic_gradient_check(100, seed + 2),
      actor_gradient_check(100, seed + 3),
      soft_update_algebra({0.0, 0.25, 1.0}, seed + 4),
  };
}

}  // namespace safebid::verify
