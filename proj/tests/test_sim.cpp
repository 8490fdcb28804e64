#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "safebid/errors.hpp"
#include "safebid/sim.hpp"

using namespace safebid;
using namespace safebid::sim;

namespace {

ExperimentConfig flat_demand(double d) {
  ExperimentConfig cfg;
  cfg.demand.lo = d;
  cfg.demand.hi = d;
  cfg.episodes = 1;
  cfg.steps = 10;
  cfg.window = 10;
  return cfg;
}

ExperimentConfig short_run(Learner learner, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.episodes = 3;
  cfg.steps = 10;
  cfg.window = 10;
  cfg.learner = learner;
  cfg.seed = seed;
  cfg.ddpg.batch_size = 8;
  cfg.ddpg.hidden1 = 16;
  cfg.ddpg.hidden2 = 16;
  return cfg;
}

std::vector<ddpg::Action> uniform_actions(std::size_t n, double k, std::uint8_t u = 0) {
  return std::vector<ddpg::Action>(n, ddpg::Action{u, k});
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("reward examples") {
  const auto units = market::case_study_units();
  CHECK(compute_reward(1.75, 0.0, units[0], 0) == 0.0);
  CHECK(compute_reward(1.75, 5.0, units[0], 0) == -1.25);
  CHECK(compute_reward(1.75, 50.0, units[2], 0) == 37.5);
  CHECK(compute_reward(2.0, 0.0, units[2], 1) == -142.0);
}

TEST_CASE("demand profile") {
  DemandModel m;
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    for (int t = 1; t <= 3000; ++t) {
      const double d = demand_profile(t, m, seed);
      CHECK(d >= 60.0);
      CHECK(d <= 160.0);
      CHECK(d == demand_profile(t, m, seed));
    }
  }
  DemandModel pure = m;
  pure.noise = 0.0;
  double mean = 0.0;
  for (int t = 1; t <= 7 * 100; ++t) {
    const double d = demand_profile(t, pure, 3);
    CHECK(d == doctest::Approx(110.0 + 35.0 * std::sin(2 * std::numbers::pi * t / 7.0)).epsilon(1e-14));
    mean += d;
  }
  CHECK(mean / 700.0 == doctest::Approx(110.0).epsilon(1e-12));
  CHECK(demand_profile(5, m, 1) != demand_profile(5, m, 2));
}

TEST_CASE("band checks") {
  const auto units = market::case_study_units();
  CHECK_NOTHROW(check_band(DemandModel{}, units, 2));
  CHECK_THROWS_AS(check_band(DemandModel{20, 100, 0, 0, 7}, units, 2), BadBand);
  CHECK_THROWS_AS(check_band(DemandModel{60, 176, 0, 0, 7}, units, 2), BadBand);
  CHECK_NOTHROW(check_band(DemandModel{30, 175, 0, 0, 7}, units, 2));
  CHECK_THROWS_AS(check_band(DemandModel{100, 90, 0, 0, 7}, units, 2), BadBand);
}

TEST_CASE("one step at 150 MW with competitive bids") {
  const ExperimentConfig cfg = flat_demand(150);
  World w(cfg);
  const StepResult r = env_step(w, uniform_actions(6, 1.0), 1);
  CHECK(r.record.price == 1.75);
  CHECK(r.record.demand == 150.0);
  const std::vector<double> gen = {5, 80, 50, 5, 5, 5};
  CHECK(r.record.gen == gen);
  const std::vector<double> want = {-1.25, 0.0, 37.5, -7.5, -6.25, -6.25};
  CHECK(r.record.reward == want);
  CHECK(r.next.price == doctest::Approx(1.75 / 6.5).epsilon(1e-15));
  CHECK(r.next.demand == doctest::Approx(150.0 / 335.0).epsilon(1e-15));
  CHECK(w.t == 2);
}

TEST_CASE("joint requests beyond the cap are cut") {
  const ExperimentConfig cfg = flat_demand(100);
  World w(cfg);
  const StepResult r = env_step(w, uniform_actions(6, 1.2, 1), 1);
  int out = 0;
  for (auto u : r.record.u_applied) out += u;
  CHECK(out <= 2);
  CHECK(r.record.filter_distance >= 4);
}

TEST_CASE("env_step is deterministic") {
  const ExperimentConfig cfg = short_run(Learner::Ddpg, 4);
  World a(cfg), b(cfg);
  std::vector<ddpg::Action> acts = uniform_actions(6, 1.3);
  acts[1].u = 1;
  for (int s = 0; s < 5; ++s) {
    const StepResult x = env_step(a, acts, 1);
    const StepResult y = env_step(b, acts, 1);
    CHECK(x.record.price == y.record.price);
    CHECK(x.record.gen == y.record.gen);
    CHECK(x.record.reward == y.record.reward);
    CHECK(x.record.u_applied == y.record.u_applied);
  }
}

TEST_CASE("smallest run") {
  ExperimentConfig cfg;
  cfg.episodes = 1;
  cfg.steps = 2;
  cfg.ddpg.batch_size = 1;
  const RunResult r = run_training(cfg);
  REQUIRE(r.trace.size() == 2);
  for (const auto& rec : r.trace) {
    CHECK(rec.reward.size() == 6);
    CHECK(rec.k.size() == 6);
  }
  CHECK(r.audit.clean());
  CHECK(r.audit.windows_checked == 0);
  CHECK(r.metrics.size() == 1);
}

TEST_CASE("training runs keep every invariant and the reward identity") {
  for (Learner learner : {Learner::Ddpg, Learner::QLearn}) {
    const ExperimentConfig cfg = short_run(learner, 7);
    const RunResult r = run_training(cfg);
    CHECK(r.trace.size() == 30);
    CHECK(r.audit.clean());
    CHECK(r.audit.windows_checked == 3);
    for (const auto& rec : r.trace) {
      int out = 0;
      for (std::size_t i = 0; i < 6; ++i) {
        out += rec.u_applied[i];
        CHECK(rec.reward[i] == rec.price * rec.gen[i] - cfg.units[i].marginal_cost * rec.gen[i] -
                                   cfg.units[i].maint_cost * rec.u_applied[i]);
        CHECK(rec.k[i] >= 1.0);
        CHECK(rec.k[i] <= cfg.units[i].k_max);
      }
      CHECK(out <= cfg.max_concurrent);
    }
    // Episode means against a direct recomputation.
    for (const auto& m : r.metrics) {
      double total = 0.0;
      for (std::size_t i = 0; i < 6; ++i) {
        double sum = 0.0;
        int count = 0;
        for (const auto& rec : r.trace) {
          if (rec.episode != m.episode) continue;
          sum += rec.reward[i];
          ++count;
        }
        CHECK(std::abs(m.mean_reward[i] - sum / count) <= 1e-12);
        total += sum / count;
      }
      CHECK(std::abs(m.sum_mean_reward - total) <= 1e-12);
    }
  }
}

TEST_CASE("replaying recorded actions reproduces prices and rewards") {
  const ExperimentConfig cfg = short_run(Learner::Ddpg, 8);
  const RunResult r = run_training(cfg);
  World w(cfg);
  for (const auto& rec : r.trace) {
    std::vector<ddpg::Action> acts;
    for (std::size_t i = 0; i < 6; ++i) acts.push_back({rec.u_request[i], rec.k[i]});
    const StepResult again = env_step(w, acts, rec.episode);
    CHECK(again.record.price == rec.price);
    CHECK(again.record.reward == rec.reward);
    CHECK(again.record.u_applied == rec.u_applied);
  }
}

TEST_CASE("same seed, same run") {
  const ExperimentConfig cfg = short_run(Learner::Ddpg, 9);
  const RunResult a = run_training(cfg);
  const RunResult b = run_training(cfg);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t j = 0; j < a.trace.size(); ++j) {
    CHECK(a.trace[j].reward == b.trace[j].reward);
    CHECK(a.trace[j].k == b.trace[j].k);
  }
}

TEST_CASE("ablation records what the filter would prevent") {
  SUBCASE("heavy requests break the cap") {
    const ExperimentConfig cfg = flat_demand(150);
    World w(cfg, true);
    std::vector<StepRecord> trace;
    std::vector<ddpg::Action> acts = uniform_actions(6, 1.0);
    acts[0].u = acts[1].u = acts[2].u = 1;
    trace.push_back(env_step(w, acts, 1).record);
    CHECK(trace[0].u_applied == trace[0].u_request);
    CHECK(audit_trace(cfg, trace).cap_violation_steps == 1);
    // 125 MW left for a 150 MW load.
    CHECK(w.shortfall_steps == 1);
    CHECK(trace[0].demand == 150.0);
  }
  SUBCASE("no requests, no violations") {
    const ExperimentConfig cfg = flat_demand(120);
    World w(cfg, true);
    std::vector<StepRecord> trace;
    for (int s = 0; s < 5; ++s) trace.push_back(env_step(w, uniform_actions(6, 1.0), 1).record);
    const AuditReport a = audit_trace(cfg, trace);
    CHECK(a.cap_violation_steps == 0);
    CHECK(a.short_blocks == 0);
    CHECK(a.windows_checked == 0);
    CHECK(w.shortfall_steps == 0);
  }
  SUBCASE("filtered and bypassed runs see the same demand") {
    const ExperimentConfig cfg = short_run(Learner::Ddpg, 3);
    const RunResult safe = run_training(cfg);
    const RunResult unsafe = run_unsafe_ablation(cfg);
    REQUIRE(safe.trace.size() == unsafe.trace.size());
    for (std::size_t j = 0; j < safe.trace.size(); ++j) CHECK(safe.trace[j].demand == unsafe.trace[j].demand);
  }
}

TEST_CASE("audit counts short blocks and thin windows") {
  ExperimentConfig cfg = flat_demand(120);
  cfg.units[0].maint_block = 2;
  std::vector<StepRecord> trace(6);
  for (int j = 0; j < 6; ++j) {
    trace[static_cast<std::size_t>(j)].t = j + 1;
    trace[static_cast<std::size_t>(j)].u_applied.assign(6, 0);
  }
  cfg.window = 3;
  trace[1].u_applied[0] = 1;  // a one-step run for a unit needing two
  for (std::size_t i = 1; i < 6; ++i) trace[0].u_applied[i] = trace[3].u_applied[i] = 1;
  const AuditReport a = audit_trace(cfg, trace);
  CHECK(a.short_blocks == 1);
  CHECK(a.windows_checked == 2);
  CHECK(a.coverage_violations == 1);  // unit 1 in steps 4..6
  CHECK(a.cap_violation_steps == 2);
}

TEST_CASE("validation collects every problem") {
  ExperimentConfig cfg;
  cfg.units[0].k_max = 0.5;
  cfg.episodes = 0;
  try {
    validate(cfg);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("k_max") != std::string::npos);
    CHECK(msg.find("episodes") != std::string::npos);
  }
}

TEST_CASE("CSV outputs and headers") {
  const ExperimentConfig cfg = short_run(Learner::QLearn, 5);
  const RunResult r = run_unsafe_ablation(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "safebid_test_sim";
  std::filesystem::remove_all(dir);
  write_run_outputs(dir.string(), cfg, r, true);
  const std::string metrics = slurp(dir / "metrics_episode.csv");
  CHECK(metrics.rfind("episode,sum_mean_reward,mean_reward_1,", 0) == 0);
  CHECK(metrics.find("mean_k_6,total_maint_cost\n") != std::string::npos);
  const std::string trace = slurp(dir / "trace_steps.csv");
  CHECK(trace.rfind("episode,t,price,demand,filter_distance,k_1,u_req_1,u_f_1,g_1,r_1,k_2", 0) == 0);
  const std::string raster = slurp(dir / "maintenance_raster.csv");
  CHECK(raster.rfind("t,unit_1,unit_2,unit_3,unit_4,unit_5,unit_6\n1,", 0) == 0);
  CHECK(std::count(raster.begin(), raster.end(), '\n') == 31);
  CHECK(slurp(dir / "ablation_summary.csv").rfind("metric,value\ncap_violation_steps,", 0) == 0);
  CHECK(std::filesystem::exists(dir / "qtable_6.txt"));
}
