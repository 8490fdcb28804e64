#include "safebid/sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "safebid/errors.hpp"

namespace safebid::sim {

namespace {

constexpr std::uint64_t kDemandStream = 1;
constexpr std::uint64_t kInitStream = 100;
constexpr std::uint64_t kActStream = 200;
constexpr std::uint64_t kReplayStream = 300;

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ (stream * 0xd1b54a32d192ed03ULL));
}

double demand_profile(int t, const DemandModel& m, std::uint64_t seed) {
  const double mid = 0.5 * (m.lo + m.hi);
  const std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(t)));
  const double xi = 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
  const double d =
      mid + m.amplitude * std::sin(2.0 * std::numbers::pi * t / m.period) + m.noise * xi;
  return std::clamp(d, m.lo, m.hi);
}

void check_band(const DemandModel& m, std::span<const market::UnitParams> units,
                int max_concurrent) {
  double min_sum = 0.0;
  std::vector<double> caps;
  for (const auto& u : units) {
    min_sum += u.g_min;
    caps.push_back(u.g_max);
  }
  std::sort(caps.begin(), caps.end(), std::greater<>());
  double available = 0.0;
  for (std::size_t i = 0; i < caps.size(); ++i) {
    if (static_cast<int>(i) >= max_concurrent) available += caps[i];
  }
  if (!(m.lo <= m.hi)) throw BadBand(fmt::format("band [{}, {}] is empty", m.lo, m.hi));
  if (m.lo < min_sum) {
    throw BadBand(fmt::format("band low end {} is below the total minimum output {}", m.lo, min_sum));
  }
  if (m.hi > available) {
    throw BadBand(fmt::format(
        "band high end {} exceeds the {} MW left with the {} largest units out", m.hi, available,
        max_concurrent));
  }
  if (!(m.period > 0.0) || m.amplitude < 0.0 || m.noise < 0.0) {
    throw BadBand("demand period must be positive and amplitudes non-negative");
  }
}

double compute_reward(double price, double gen, const market::UnitParams& unit, std::uint8_t u) {
  return price * gen - unit.marginal_cost * gen - unit.maint_cost * u;
}

safety::FilterConfig ExperimentConfig::filter_config() const {
  safety::FilterConfig f;
  f.mode = mode;
  f.max_concurrent = max_concurrent;
  f.window = window;
  f.horizon = horizon();
  for (const auto& u : units) {
    f.block.push_back(u.maint_block);
    f.required.push_back(u.maint_required);
  }
  return f;
}

void validate(const ExperimentConfig& cfg) {
  std::vector<std::string> bad;
  auto need = [&](bool ok, std::string msg) {
    if (!ok) bad.push_back(std::move(msg));
  };
  need(cfg.episodes >= 1, "episodes must be >= 1");
  need(cfg.steps >= 1, "steps per episode must be >= 1");
  need(!cfg.units.empty(), "at least one unit is required");
  const int n = static_cast<int>(cfg.units.size());
  for (const auto& u : cfg.units) {
    const std::string tag = fmt::format("unit {}", u.id);
    need(u.g_min >= 0.0 && u.g_min <= u.g_max, tag + ": need 0 <= g_min <= g_max");
    need(u.marginal_cost > 0.0, tag + ": marginal cost must be positive");
    need(u.maint_cost >= 0.0, tag + ": maintenance cost must be non-negative");
    need(u.maint_block >= 1, tag + ": maintenance block must be >= 1");
    need(u.maint_required >= 1, tag + ": required maintenance must be >= 1");
    need(u.k_max >= 1.0, tag + ": k_max must be >= 1");
    need(u.ramp_up >= 0.0 && u.ramp_down >= 0.0, tag + ": ramp limits must be non-negative");
    need(u.maint_required <= cfg.window, tag + ": required maintenance exceeds the window");
    need(u.maint_block <= cfg.window, tag + ": maintenance block exceeds the window");
  }
  need(cfg.max_concurrent >= 1 && cfg.max_concurrent <= n,
       "max_concurrent must lie in [1, number of units]");
  need(cfg.window >= 1, "window must be >= 1");
  if (!cfg.units.empty() && cfg.max_concurrent >= 1) {
    try {
      check_band(cfg.demand, cfg.units, std::min(cfg.max_concurrent, n));
    } catch (const BadBand& e) {
      bad.push_back(e.what());
    }
  }
  const auto& d = cfg.ddpg;
  need(d.hidden1 >= 1 && d.hidden2 >= 1, "hidden layer widths must be >= 1");
  need(d.gamma >= 0.0 && d.gamma < 1.0, "ddpg gamma must lie in [0, 1)");
  need(d.critic_lr > 0.0 && d.actor_lr > 0.0, "learning rates must be positive");
  need(d.tau >= 0.0 && d.tau <= 1.0 && d.actor_tau >= 0.0 && d.actor_tau <= 1.0,
       "soft update rates must lie in [0, 1]");
  need(d.batch_size >= 1 && d.buffer_capacity >= d.batch_size,
       "buffer capacity must be at least the batch size");
  need(d.sigma_start >= 0.0 && d.sigma_end >= 0.0, "exploration noise must be non-negative");
  need(d.reward_scale > 0.0, "reward scale must be positive");
  need(d.init_range > 0.0, "init range must be positive");
  need(d.bound_penalty >= 0.0, "bound penalty must be non-negative");
  const auto& q = cfg.qlearn;
  need(q.alpha > 0.0 && q.alpha <= 1.0, "q-learning alpha must lie in (0, 1]");
  need(q.gamma >= 0.0 && q.gamma < 1.0, "q-learning gamma must lie in [0, 1)");
  need(q.epsilon_start >= 0.0 && q.epsilon_start <= 1.0 && q.epsilon_end >= 0.0 &&
           q.epsilon_end <= 1.0,
       "epsilon must lie in [0, 1]");
  need(!q.bid_levels.empty(), "at least one bid level is required");
  for (double k : q.bid_levels) {
    for (const auto& u : cfg.units) {
      need(k >= 1.0 && k <= u.k_max,
           fmt::format("bid level {} outside [1, k_max] of unit {}", k, u.id));
    }
  }
  for (const auto* ax : {&q.binning.price, &q.binning.demand}) {
    need(ax->bins >= 2 && ax->hi > ax->lo, "binning needs >= 2 bins over a non-empty range");
  }
  if (!bad.empty()) {
    std::string msg;
    for (const auto& b : bad) msg += (msg.empty() ? "" : "; ") + b;
    throw ValidationError(msg);
  }
}

ddpg::Observation normalize(const ExperimentConfig& cfg, double price, double demand) {
  double top = 0.0, cap = 0.0;
  for (const auto& u : cfg.units) {
    top = std::max(top, u.k_max * u.marginal_cost);
    cap += u.g_max;
  }
  return {price / top, demand / cap};
}

World::World(const ExperimentConfig& c, bool bypass)
    : cfg(&c), filter(c.filter_config()), safety(safety::initial_state(filter)), bypass_filter(bypass) {}

StepResult env_step(World& world, std::span<const ddpg::Action> actions, int episode) {
  const ExperimentConfig& cfg = *world.cfg;
  const std::size_t n = cfg.units.size();
  if (actions.size() != n) {
    throw DimensionMismatch(fmt::format("{} actions for {} units", actions.size(), n));
  }
  StepRecord rec;
  rec.episode = episode;
  rec.t = world.t;
  for (const auto& a : actions) {
    rec.k.push_back(a.k);
    rec.u_request.push_back(a.u);
  }

  if (world.bypass_filter) {
    rec.u_applied = rec.u_request;
  } else {
    safety::SafeDecision dec = safety::filter_project(rec.u_request, world.safety, world.filter);
    rec.u_applied = std::move(dec.u);
    rec.filter_distance = dec.distance;
  }

  market::MarketInstance inst;
  inst.units = cfg.units;
  inst.bids = rec.k;
  inst.maint = rec.u_applied;
  const double load = demand_profile(world.t, cfg.demand, derive_seed(cfg.seed, kDemandStream));
  inst.demand = load;
  inst.ramps_enabled = cfg.ramps_enabled;
  if (cfg.ramps_enabled && !world.prev_gen.empty()) inst.prev_gen = world.prev_gen;

  if (world.bypass_filter) {
    const market::UnitBounds b = market::effective_bounds(inst);
    const double lo = std::accumulate(b.lo.begin(), b.lo.end(), 0.0);
    const double hi = std::accumulate(b.hi.begin(), b.hi.end(), 0.0);
    if (inst.demand > hi || inst.demand < lo) {
      inst.demand = std::clamp(inst.demand, lo, hi);
      ++world.shortfall_steps;
    }
  }

  const market::MarketOutcome out = market::clear_market(inst);
  rec.price = out.price;
  rec.demand = load;
  rec.gen = out.gen;
  for (std::size_t i = 0; i < n; ++i) {
    rec.reward.push_back(compute_reward(out.price, out.gen[i], cfg.units[i], rec.u_applied[i]));
  }

  world.safety = safety::advance_state(world.safety, rec.u_applied, world.filter);
  world.prev_gen = out.gen;
  ++world.t;
  return StepResult{normalize(cfg, rec.price, rec.demand), std::move(rec)};
}

std::vector<EpisodeMetrics> episode_metrics(const ExperimentConfig& cfg,
                                            std::span<const StepRecord> trace) {
  const std::size_t n = cfg.units.size();
  std::vector<EpisodeMetrics> out;
  std::size_t j = 0;
  while (j < trace.size()) {
    EpisodeMetrics m;
    m.episode = trace[j].episode;
    m.mean_reward.assign(n, 0.0);
    m.mean_k.assign(n, 0.0);
    std::size_t count = 0;
    for (; j < trace.size() && trace[j].episode == m.episode; ++j, ++count) {
      const StepRecord& r = trace[j];
      for (std::size_t i = 0; i < n; ++i) {
        m.mean_reward[i] += r.reward[i];
        m.mean_k[i] += r.k[i];
        m.total_maint_cost += cfg.units[i].maint_cost * r.u_applied[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      m.mean_reward[i] /= static_cast<double>(count);
      m.mean_k[i] /= static_cast<double>(count);
      m.sum_mean_reward += m.mean_reward[i];
    }
    out.push_back(std::move(m));
  }
  return out;
}

AuditReport audit_trace(const ExperimentConfig& cfg, std::span<const StepRecord> trace) {
  AuditReport rep;
  if (trace.empty()) return rep;
  const std::size_t n = cfg.units.size();
  for (const StepRecord& r : trace) {
    int out = 0;
    for (auto u : r.u_applied) out += u;
    if (out > cfg.max_concurrent) ++rep.cap_violation_steps;
  }
  for (std::size_t i = 0; i < n; ++i) {
    int run = 0;
    for (std::size_t j = 0; j <= trace.size(); ++j) {
      const bool on = j < trace.size() && trace[j].u_applied[i];
      if (on) {
        ++run;
      } else {
        if (run > 0 && run < cfg.units[i].maint_block) ++rep.short_blocks;
        run = 0;
      }
    }
  }
  const int first = trace.front().t;
  const int last = trace.back().t;
  const int w = cfg.window;
  for (int start = ((first - 1 + w - 1) / w) * w + 1; start + w - 1 <= last; start += w) {
    ++rep.windows_checked;
    for (std::size_t i = 0; i < n; ++i) {
      int got = 0;
      for (int s = start; s < start + w; ++s) got += trace[static_cast<std::size_t>(s - first)].u_applied[i];
      if (got < cfg.units[i].maint_required) ++rep.coverage_violations;
    }
  }
  return rep;
}

namespace {

double linear_decay(double start, double end, long step, long total) {
  if (total <= 1) return start;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(total - 1);
}

RunResult run_loop(const ExperimentConfig& cfg, bool bypass) {
  validate(cfg);
  const std::size_t n = cfg.units.size();
  const bool use_ddpg = cfg.learner == Learner::Ddpg;
  World world(cfg, bypass);
  RunResult res;

  std::vector<ddpg::Rng> act_rng, replay_rng;
  for (std::size_t i = 0; i < n; ++i) {
    act_rng.emplace_back(derive_seed(cfg.seed, kActStream + i));
    replay_rng.emplace_back(derive_seed(cfg.seed, kReplayStream + i));
    if (use_ddpg) {
      ddpg::Rng init(derive_seed(cfg.seed, kInitStream + i));
      res.brains.emplace_back(cfg.ddpg, cfg.units[i].k_max, init);
    } else {
      res.tables.emplace_back(cfg.qlearn.binning.states(),
                              2 * static_cast<int>(cfg.qlearn.bid_levels.size()), cfg.qlearn.alpha,
                              cfg.qlearn.gamma);
    }
  }
  const int levels = static_cast<int>(cfg.qlearn.bid_levels.size());

  double min_cost = cfg.units.front().marginal_cost;
  for (const auto& u : cfg.units) min_cost = std::min(min_cost, u.marginal_cost);
  ddpg::Observation obs = normalize(cfg, min_cost, 0.5 * (cfg.demand.lo + cfg.demand.hi));

  const long total = cfg.horizon();
  long step = 0;
  res.trace.reserve(static_cast<std::size_t>(total));
  std::vector<ddpg::Action> actions(n);
  std::vector<int> levels_chosen(n);
  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    for (int s = 0; s < cfg.steps; ++s, ++step) {
      int q_state = 0;
      if (use_ddpg) {
        const double sigma = linear_decay(cfg.ddpg.sigma_start, cfg.ddpg.sigma_end, step, total);
        for (std::size_t i = 0; i < n; ++i) {
          actions[i] = ddpg::select_action(res.brains[i], obs, true, sigma, act_rng[i]);
        }
      } else {
        const double eps =
            linear_decay(cfg.qlearn.epsilon_start, cfg.qlearn.epsilon_end, step, total);
        q_state = qlearn::discretize_state(obs.price, obs.demand, cfg.qlearn.binning);
        for (std::size_t i = 0; i < n; ++i) {
          const int a = qlearn::epsilon_greedy_action(res.tables[i], q_state, eps, act_rng[i]);
          const qlearn::DiscreteAction da = qlearn::decode_action(a, levels);
          levels_chosen[i] = da.level;
          actions[i] = ddpg::Action{da.maint, cfg.qlearn.bid_levels[static_cast<std::size_t>(da.level)]};
        }
      }

      StepResult sr = env_step(world, actions, ep);
      const StepRecord& rec = sr.record;
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t u = rec.u_applied[i];
        if (use_ddpg) {
          ddpg::AgentBrain& b = res.brains[i];
          b.buffer.push(ddpg::Experience{obs, sr.next, ddpg::Action{u, rec.k[i]}, rec.reward[i]});
          if (b.buffer.size() >= b.cfg.batch_size) ddpg::train_step(b, replay_rng[i]);
        } else {
          const int a = qlearn::encode_action({levels_chosen[i], u}, levels);
          const int next = qlearn::discretize_state(sr.next.price, sr.next.demand, cfg.qlearn.binning);
          qlearn::q_update(res.tables[i], q_state, a, rec.reward[i], next);
        }
      }
      obs = sr.next;
      res.trace.push_back(std::move(sr.record));
    }
  }
  res.metrics = episode_metrics(cfg, res.trace);
  res.audit = audit_trace(cfg, res.trace);
  res.shortfall_steps = world.shortfall_steps;
  return res;
}

}  // namespace

RunResult run_training(const ExperimentConfig& cfg) { return run_loop(cfg, false); }

RunResult run_unsafe_ablation(const ExperimentConfig& cfg) { return run_loop(cfg, true); }

double smoothed_reward(std::span<const EpisodeMetrics> m, int first, int last) {
  double sum = 0.0;
  int count = 0;
  for (const auto& e : m) {
    if (e.episode >= first && e.episode <= last) {
      sum += e.sum_mean_reward;
      ++count;
    }
  }
  if (count == 0) throw IndexOutOfRange(fmt::format("no episodes in [{}, {}]", first, last));
  return sum / count;
}

// ---------------------------------------------------------------------------
// CSV output

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("IoError", "cannot open " + path + " for writing");
  return os;
}

}  // namespace

void write_metrics_csv(const std::string& path, const ExperimentConfig& cfg,
                       std::span<const EpisodeMetrics> metrics) {
  const std::size_t n = cfg.units.size();
  std::ofstream os = open_out(path);
  os << "episode,sum_mean_reward";
  for (std::size_t i = 1; i <= n; ++i) os << ",mean_reward_" << i;
  for (std::size_t i = 1; i <= n; ++i) os << ",mean_k_" << i;
  os << ",total_maint_cost\n";
  for (const auto& m : metrics) {
    os << fmt::format("{},{}", m.episode, m.sum_mean_reward);
    for (double v : m.mean_reward) os << fmt::format(",{}", v);
    for (double v : m.mean_k) os << fmt::format(",{}", v);
    os << fmt::format(",{}\n", m.total_maint_cost);
  }
}

void write_trace_csv(const std::string& path, const ExperimentConfig& cfg,
                     std::span<const StepRecord> trace) {
  const std::size_t n = cfg.units.size();
  std::ofstream os = open_out(path);
  os << "episode,t,price,demand,filter_distance";
  for (std::size_t i = 1; i <= n; ++i) {
    os << fmt::format(",k_{0},u_req_{0},u_f_{0},g_{0},r_{0}", i);
  }
  os << '\n';
  for (const auto& r : trace) {
    os << fmt::format("{},{},{},{},{}", r.episode, r.t, r.price, r.demand, r.filter_distance);
    for (std::size_t i = 0; i < n; ++i) {
      os << fmt::format(",{},{},{},{},{}", r.k[i], r.u_request[i], r.u_applied[i], r.gen[i],
                        r.reward[i]);
    }
    os << '\n';
  }
}

void write_raster_csv(const std::string& path, const ExperimentConfig& cfg,
                      std::span<const StepRecord> trace) {
  const std::size_t n = cfg.units.size();
  std::ofstream os = open_out(path);
  os << "t";
  for (std::size_t i = 1; i <= n; ++i) os << ",unit_" << i;
  os << '\n';
  for (const auto& r : trace) {
    os << r.t;
    for (auto u : r.u_applied) os << ',' << static_cast<int>(u);
    os << '\n';
  }
}

void write_ablation_csv(const std::string& path, const RunResult& r) {
  std::ofstream os = open_out(path);
  os << "metric,value\n";
  os << "cap_violation_steps," << r.audit.cap_violation_steps << '\n';
  os << "coverage_violations," << r.audit.coverage_violations << '\n';
  os << "short_blocks," << r.audit.short_blocks << '\n';
  os << "windows_checked," << r.audit.windows_checked << '\n';
  os << "shortfall_steps," << r.shortfall_steps << '\n';
}

void write_run_outputs(const std::string& dir, const ExperimentConfig& cfg, const RunResult& r,
                       bool ablation) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_metrics_csv((base / "metrics_episode.csv").string(), cfg, r.metrics);
  write_trace_csv((base / "trace_steps.csv").string(), cfg, r.trace);
  write_raster_csv((base / "maintenance_raster.csv").string(), cfg, r.trace);
  if (ablation) write_ablation_csv((base / "ablation_summary.csv").string(), r);
  for (std::size_t i = 0; i < r.brains.size(); ++i) {
    ddpg::save_checkpoint(r.brains[i], (base / fmt::format("agent_{}.ckpt", i + 1)).string());
  }
  for (std::size_t i = 0; i < r.tables.size(); ++i) {
    r.tables[i].save((base / fmt::format("qtable_{}.txt", i + 1)).string());
  }
}

}  // namespace safebid::sim
