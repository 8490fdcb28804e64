#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "safebid/config.hpp"
#include "safebid/errors.hpp"
#include "safebid/milp.hpp"
#include "safebid/sim.hpp"
#include "safebid/verify.hpp"

using namespace safebid;

namespace {

constexpr int kEngineError = 1;
constexpr int kConfigError = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> episodes;
  std::optional<std::string> mode;
  std::string instance;
  std::string request;
  std::string state;
  std::optional<double> big_m;
};

void print_error(const std::string& kind, const std::string& message) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

sim::ExperimentConfig load(const Options& o) {
  sim::ExperimentConfig cfg =
      o.config.empty() ? sim::ExperimentConfig{} : config::parse_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.episodes) cfg.episodes = *o.episodes;
  if (o.mode) {
    if (*o.mode == "intent") {
      cfg.mode = safety::Mode::Intent;
    } else if (*o.mode == "literal") {
      cfg.mode = safety::Mode::Literal;
    } else {
      throw ParseError("--mode must be intent or literal");
    }
  }
  try {
    sim::validate(cfg);
  } catch (const BadBand& e) {
    throw ValidationError(e.what());
  }
  return cfg;
}

std::vector<std::uint8_t> parse_bits(const std::string& text, std::size_t n) {
  std::vector<std::uint8_t> bits;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item != "0" && item != "1") throw ParseError("--request entries must be 0 or 1");
    bits.push_back(item == "1" ? 1 : 0);
  }
  if (bits.size() != n) {
    throw ParseError(fmt::format("--request has {} entries, expected {}", bits.size(), n));
  }
  return bits;
}

std::string join(const auto& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + fmt::format("{}", x);
  return s;
}

int cmd_dispatch(const Options& o) {
  const sim::ExperimentConfig cfg = load(o);
  if (o.instance.empty()) throw ParseError("dispatch needs --instance FILE");
  const market::MarketInstance inst = config::parse_instance(o.instance, cfg.units);
  const market::MarketOutcome out = market::clear_market(inst);
  fmt::print("price {}\ntotal_cost {}\ngen {}\n", out.price, out.total_cost, join(out.gen));
  return 0;
}

safety::SafetyState load_state(const Options& o, const safety::FilterConfig& fc) {
  return o.state.empty() ? safety::initial_state(fc) : config::parse_state(o.state, fc);
}

int cmd_filter(const Options& o) {
  const sim::ExperimentConfig cfg = load(o);
  const safety::FilterConfig fc = cfg.filter_config();
  const auto request = parse_bits(o.request, cfg.units.size());
  const safety::SafetyState st = load_state(o, fc);
  const safety::SafeDecision d = safety::filter_project(request, st, fc);
  fmt::print("t {}\nrequest {}\nu_f {}\ndistance {}\n", st.t, join(request), join(d.u), d.distance);
  return 0;
}

int cmd_export_milp(const Options& o) {
  const sim::ExperimentConfig cfg = load(o);
  const safety::FilterConfig fc = cfg.filter_config();
  const auto request = o.request.empty() ? std::vector<std::uint8_t>(cfg.units.size(), 0)
                                         : parse_bits(o.request, cfg.units.size());
  const safety::SafetyState st = load_state(o, fc);
  const double big_m = o.big_m.value_or(static_cast<double>(fc.horizon));
  const safety::MilpModel m = safety::big_m_expand(fc, st, request, big_m);
  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = (std::filesystem::path(cfg.out_dir) / fmt::format("filter_t{}.lp", st.t)).string();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("IoError", "cannot open " + path + " for writing");
  os << m.to_lp_format();
  fmt::print("wrote {} ({} variables, {} rows)\n", path, m.vars.size(), m.rows.size());
  return 0;
}

int report_run(const sim::ExperimentConfig& cfg, const sim::RunResult& r, bool ablation) {
  sim::write_run_outputs(cfg.out_dir, cfg, r, ablation);
  const int last = cfg.episodes;
  const int w = std::min(10, last);
  fmt::print("episodes {}\nsteps {}\n", cfg.episodes, r.trace.size());
  fmt::print("smoothed_reward_first {}\nsmoothed_reward_last {}\n",
             sim::smoothed_reward(r.metrics, 1, w), sim::smoothed_reward(r.metrics, last - w + 1, last));
  fmt::print("cap_violation_steps {}\ncoverage_violations {}\nshort_blocks {}\n",
             r.audit.cap_violation_steps, r.audit.coverage_violations, r.audit.short_blocks);
  if (ablation) fmt::print("shortfall_steps {}\n", r.shortfall_steps);
  fmt::print("out {}\n", cfg.out_dir);
  return 0;
}

int cmd_train(const Options& o, std::optional<sim::Learner> learner) {
  sim::ExperimentConfig cfg = load(o);
  if (learner) cfg.learner = *learner;
  return report_run(cfg, sim::run_training(cfg), false);
}

int cmd_ablate(const Options& o) {
  const sim::ExperimentConfig cfg = load(o);
  return report_run(cfg, sim::run_unsafe_ablation(cfg), true);
}

int cmd_verify(const Options& o) {
  const sim::ExperimentConfig cfg = load(o);
  bool ok = true;
  for (const verify::SuiteResult& s : verify::run_all(cfg.seed)) {
    fmt::print("{} {} cases={} failures={} worst={:.3g} time={:.2f}s\n", s.passed() ? "PASS" : "FAIL",
               s.name, s.cases, s.failures, s.worst, s.seconds);
    for (const auto& n : s.notes) fmt::print("  {}\n", n);
    ok = ok && s.passed();
  }
  return ok ? 0 : kEngineError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Market clearing, maintenance safety filter and multi-agent learners"};
  app.require_subcommand(1, 1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master seed override");
    sub->add_option("--out", o.out, "Output directory override");
    sub->add_option("--episodes", o.episodes, "Episode count override");
    sub->add_option("--mode", o.mode, "Filter semantics: intent or literal");
  };

  auto* dispatch = app.add_subcommand("dispatch", "Clear one market instance");
  add_common(dispatch);
  dispatch->add_option("--instance", o.instance, "Instance file (JSON)")->required();

  auto* filter = app.add_subcommand("filter", "Project one maintenance request");
  add_common(filter);
  filter->add_option("--request", o.request, "Comma-separated 0/1 per unit")->required();
  filter->add_option("--state", o.state, "Safety state file (JSON)");

  auto* train = app.add_subcommand("train", "Train the DDPG agents with the safety filter");
  add_common(train);
  auto* ablate = app.add_subcommand("ablate-unsafe", "Train with the safety filter bypassed");
  add_common(ablate);
  auto* baseline = app.add_subcommand("baseline-q", "Train tabular Q-learning agents");
  add_common(baseline);

  auto* milp = app.add_subcommand("export-milp", "Write the linearised filter problem in LP format");
  add_common(milp);
  milp->add_option("--request", o.request, "Comma-separated 0/1 per unit");
  milp->add_option("--state", o.state, "Safety state file (JSON)");
  milp->add_option("--big-m", o.big_m, "Big-M constant (default: horizon)");

  auto* ver = app.add_subcommand("verify", "Run the oracle and invariant suites");
  add_common(ver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("UsageError", e.what());
    return kConfigError;
  }

  try {
    if (dispatch->parsed()) return cmd_dispatch(o);
    if (filter->parsed()) return cmd_filter(o);
    if (train->parsed()) return cmd_train(o, sim::Learner::Ddpg);
    if (ablate->parsed()) return cmd_ablate(o);
    if (baseline->parsed()) return cmd_train(o, sim::Learner::QLearn);
    if (milp->parsed()) return cmd_export_milp(o);
    if (ver->parsed()) return cmd_verify(o);
  } catch (const ParseError& e) {
    print_error(e.kind(), e.what());
    return kConfigError;
  } catch (const ValidationError& e) {
    print_error(e.kind(), e.what());
    return kConfigError;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return kEngineError;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return kEngineError;
  }
  return kEngineError;
}
