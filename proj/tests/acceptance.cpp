// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <fmt/format.h>

#include "safebid/sim.hpp"
#include "safebid/verify.hpp"

using namespace safebid;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  fmt::print("{} {:>2} {}: {}\n", ok ? "PASS" : "FAIL", id, name, detail);
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SAFEBID_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

sim::ExperimentConfig default_config(std::uint64_t seed, sim::Learner learner) {
  sim::ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.learner = learner;
  return cfg;
}

}  // namespace

int main() {
  const std::uint64_t kSeed = 20240501;

  {
    const verify::SuiteResult r = verify::dispatch_equivalence(600, kSeed);
    report(1, "dispatch matches LP oracle", r.passed() && r.seconds < 10.0,
           fmt::format("{} instances, {} failures, worst cost gap {:.2e}, {:.2f}s", r.cases,
                       r.failures, r.worst, r.seconds));
  }
  {
    const verify::SuiteResult r = verify::filter_optimality(300, kSeed);
    report(2, "filter matches exhaustive oracle", r.passed() && r.seconds < 60.0,
           fmt::format("{} instances, {} failures, {:.2f}s", r.cases, r.failures, r.seconds));
  }
  {
    const verify::SuiteResult r = verify::big_m_exactness(100, 1000.0);
    report(3, "big-M product rows exact", r.passed(),
           fmt::format("{} (u, x) pairs, {} failures", r.cases, r.failures));
  }

  // Default DDPG runs for seeds 0..2, reused by criteria 4, 8 and 9.
  std::array<sim::RunResult, 3> ddpg_runs;
  std::array<double, 3> ddpg_secs{};
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto t0 = Clock::now();
    ddpg_runs[s] = sim::run_training(default_config(s, sim::Learner::Ddpg));
    ddpg_secs[s] = since(t0);
  }

  {
    const sim::AuditReport& a = ddpg_runs[0].audit;
    report(4, "safety audit of the default run", a.clean() && ddpg_runs[0].trace.size() == 3000,
           fmt::format("{} steps, {} windows, cap {} / block {} / coverage {} violations",
                       ddpg_runs[0].trace.size(), a.windows_checked, a.cap_violation_steps,
                       a.short_blocks, a.coverage_violations));
  }
  {
    int seeds_with_violations = 0;
    std::string detail;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const sim::RunResult r = sim::run_unsafe_ablation(default_config(s, sim::Learner::Ddpg));
      const bool hit = r.audit.cap_violation_steps > 0 || r.audit.coverage_violations > 0;
      seeds_with_violations += hit;
      detail += fmt::format("seed {}: cap {} coverage {}; ", s, r.audit.cap_violation_steps,
                            r.audit.coverage_violations);
    }
    report(5, "ablation logs violations", seeds_with_violations >= 1, detail);
  }
  {
    const verify::SuiteResult c = verify::critic_gradient_check(100, kSeed);
    const verify::SuiteResult a = verify::actor_gradient_check(100, kSeed);
    report(6, "gradient checks", c.passed() && a.passed() && c.cases >= 100 && a.cases >= 100,
           fmt::format("critic worst {:.2e} ({} fail), actor worst {:.2e} ({} fail), tol {:.0e}",
                       c.worst, c.failures, a.worst, a.failures, verify::kGradTol));
  }
  {
    const verify::SuiteResult r = verify::soft_update_algebra({0.0, 0.25, 1.0}, kSeed);
    report(7, "soft update algebra", r.passed(),
           fmt::format("{} parameters checked, worst error {:.2e}", r.cases, r.worst));
  }

  std::array<double, 3> ddpg_last{};
  {
    int rising = 0;
    double slowest = 0.0;
    std::string detail;
    for (std::size_t s = 0; s < 3; ++s) {
      const double first = sim::smoothed_reward(ddpg_runs[s].metrics, 1, 10);
      ddpg_last[s] = sim::smoothed_reward(ddpg_runs[s].metrics, 91, 100);
      rising += ddpg_last[s] > first;
      slowest = std::max(slowest, ddpg_secs[s]);
      detail += fmt::format("seed {}: {:.2f} -> {:.2f} ({:.1f}s); ", s, first, ddpg_last[s], ddpg_secs[s]);
    }
    report(8, "learning trend", rising >= 2 && slowest < 600.0, detail);
  }
  {
    int ahead = 0;
    std::string detail;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const sim::RunResult q = sim::run_training(default_config(s, sim::Learner::QLearn));
      bool same_demand = q.trace.size() == ddpg_runs[s].trace.size();
      for (std::size_t j = 0; same_demand && j < q.trace.size(); ++j) {
        same_demand = q.trace[j].demand == ddpg_runs[s].trace[j].demand;
      }
      const double q_last = sim::smoothed_reward(q.metrics, 91, 100);
      ahead += same_demand && ddpg_last[s] >= q_last;
      detail += fmt::format("seed {}: ddpg {:.2f} vs q {:.2f}{}; ", s, ddpg_last[s], q_last,
                            same_demand ? "" : " (demand differs)");
    }
    report(9, "DDPG vs Q-learning", ahead >= 2, detail);
  }
  {
    const fs::path root = fs::temp_directory_path() / "safebid_acceptance";
    fs::remove_all(root);
    const fs::path a = root / "a", b = root / "b";
    const int ca = run_cli("train --seed 0 --out " + a.string());
    const int cb = run_cli("train --seed 0 --out " + b.string());
    bool same = ca == 0 && cb == 0;
    std::string detail;
    for (const char* f : {"metrics_episode.csv", "trace_steps.csv", "maintenance_raster.csv"}) {
      const std::string x = slurp(a / f), y = slurp(b / f);
      const bool eq = !x.empty() && x == y;
      same = same && eq;
      detail += fmt::format("{} {} bytes {}; ", f, x.size(), eq ? "identical" : "DIFFER");
    }
    report(10, "deterministic CSV artifacts", same, detail);
  }

  fmt::print("{} of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
