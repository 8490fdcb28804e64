#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "safebid/ddpg.hpp"
#include "safebid/market.hpp"
#include "safebid/qlearn.hpp"
#include "safebid/safety.hpp"

namespace safebid::sim {

// splitmix64 finaliser, used to derive independent streams from one seed.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// d(t) = mid + amplitude * sin(2 pi t / period) + noise * xi(seed, t),
// clipped into [lo, hi], with xi uniform on [-1, 1) and a pure function of
// (seed, t).
struct DemandModel {
  double lo = 60.0;          // MW
  double hi = 160.0;         // MW
  double amplitude = 35.0;   // MW
  double noise = 15.0;       // MW
  double period = 7.0;       // steps
};

double demand_profile(int t, const DemandModel& m, std::uint64_t seed);

// Throws BadBand unless sum(g_min) <= lo <= hi <= capacity left after the
// max_concurrent largest units are taken out.
void check_band(const DemandModel& m, std::span<const market::UnitParams> units,
                int max_concurrent);

double compute_reward(double price, double gen, const market::UnitParams& unit, std::uint8_t u);

enum class Learner { Ddpg, QLearn };

struct ExperimentConfig {
  std::vector<market::UnitParams> units = market::case_study_units();
  int episodes = 100;
  int steps = 30;  // per episode
  DemandModel demand;
  safety::Mode mode = safety::Mode::Intent;
  int max_concurrent = 2;
  int window = 100;
  bool ramps_enabled = false;
  Learner learner = Learner::Ddpg;
  ddpg::DdpgConfig ddpg;
  qlearn::QConfig qlearn;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  int horizon() const { return episodes * steps; }
  safety::FilterConfig filter_config() const;
};

// Throws ValidationError listing every violated invariant.
void validate(const ExperimentConfig& cfg);

// Normalised observation of a (price, demand) pair.
ddpg::Observation normalize(const ExperimentConfig& cfg, double price, double demand);

struct StepRecord {
  int episode = 0;
  int t = 0;  // global step, 1-based
  double price = 0.0;
  double demand = 0.0;  // load from the demand profile, before any curtailment
  int filter_distance = 0;
  std::vector<double> k;
  std::vector<std::uint8_t> u_request;
  std::vector<std::uint8_t> u_applied;
  std::vector<double> gen;
  std::vector<double> reward;
};

struct World {
  explicit World(const ExperimentConfig& cfg, bool bypass_filter = false);

  const ExperimentConfig* cfg;
  safety::FilterConfig filter;
  safety::SafetyState safety;
  bool bypass_filter;
  int t = 1;
  std::vector<double> prev_gen;  // empty before the first clear
  int shortfall_steps = 0;       // bypass mode: steps where demand was curtailed
};

struct StepResult {
  ddpg::Observation next;
  StepRecord record;
};

// One pass of the inner loop: filter the joint maintenance request (unless
// bypassed), clear the market with the applied outages and bids, pay each
// unit, advance the safety state and clock. With the filter bypassed,
// demand that the remaining units cannot serve is curtailed to their
// capacity and the step is counted in shortfall_steps.
StepResult env_step(World& world, std::span<const ddpg::Action> actions, int episode);

struct EpisodeMetrics {
  int episode = 0;
  double sum_mean_reward = 0.0;
  std::vector<double> mean_reward;
  std::vector<double> mean_k;
  double total_maint_cost = 0.0;
};

std::vector<EpisodeMetrics> episode_metrics(const ExperimentConfig& cfg,
                                            std::span<const StepRecord> trace);

struct AuditReport {
  int cap_violation_steps = 0;    // steps with more than M units out
  int short_blocks = 0;           // maximal runs shorter than D_i
  int coverage_violations = 0;    // (unit, completed window) pairs below H_i
  int windows_checked = 0;
  bool clean() const { return cap_violation_steps == 0 && short_blocks == 0 && coverage_violations == 0; }
};

// Checks the applied schedule of a trace against the cap, the block length
// and per-window coverage (windows [jW+1, (j+1)W] lying inside the trace).
AuditReport audit_trace(const ExperimentConfig& cfg, std::span<const StepRecord> trace);

struct RunResult {
  std::vector<StepRecord> trace;
  std::vector<EpisodeMetrics> metrics;
  AuditReport audit;
  int shortfall_steps = 0;
  std::vector<ddpg::AgentBrain> brains;
  std::vector<qlearn::QTable> tables;
};

// The full episode/step loop with the learner chosen in cfg.
RunResult run_training(const ExperimentConfig& cfg);
// The same loop with the safety filter bypassed.
RunResult run_unsafe_ablation(const ExperimentConfig& cfg);

// Mean of sum_mean_reward over episodes [first, last], 1-based inclusive.
double smoothed_reward(std::span<const EpisodeMetrics> m, int first, int last);

void write_metrics_csv(const std::string& path, const ExperimentConfig& cfg,
                       std::span<const EpisodeMetrics> metrics);
void write_trace_csv(const std::string& path, const ExperimentConfig& cfg,
                     std::span<const StepRecord> trace);
void write_raster_csv(const std::string& path, const ExperimentConfig& cfg,
                      std::span<const StepRecord> trace);
void write_ablation_csv(const std::string& path, const RunResult& r);

// Writes the three CSV files (plus the ablation summary when requested and
// one checkpoint per agent) into dir, creating it if needed.
void write_run_outputs(const std::string& dir, const ExperimentConfig& cfg, const RunResult& r,
                       bool ablation);

}  // namespace safebid::sim
