#include "safebid/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "safebid/errors.hpp"

namespace safebid::config {

using nlohmann::json;

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>);

std::string line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return fmt::format("line {}, column {}", line, col);
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: syntax error at {}", what, line_col(text, e.byte)));
  }
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ParseError(fmt::format("'{}' must be an object", name()));
  }

  void get(const char* key, double& dst) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      dst = v->get<double>();
    }
  }
  void get(const char* key, int& dst) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) throw type_error(key, "an integer");
      dst = v->get<int>();
    }
  }
  void get(const char* key, std::size_t& dst) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer");
      dst = v->get<std::size_t>();
    }
  }
  void get(const char* key, bool& dst) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw type_error(key, "true or false");
      dst = v->get<bool>();
    }
  }
  void get(const char* key, std::string& dst) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      dst = v->get<std::string>();
    }
  }
  template <class T>
  void get(const char* key, std::vector<T>& dst) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw type_error(key, "an array");
      std::vector<T> out;
      for (const json& e : *v) {
        if constexpr (std::is_integral_v<T>) {
          if (!e.is_number_integer()) throw type_error(key, "an array of integers");
        } else {
          if (!e.is_number()) throw type_error(key, "an array of numbers");
        }
        out.push_back(e.get<T>());
      }
      dst = std::move(out);
    }
  }

  const json* take(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class E>
  E enum_value(const char* key, E current, std::initializer_list<std::pair<const char*, E>> names) {
    std::string s;
    get(key, s);
    if (s.empty()) return current;
    for (const auto& [n, e] : names) {
      if (s == n) return e;
    }
    std::string allowed;
    for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
    throw ParseError(fmt::format("key '{}': unknown value '{}' (expected one of {})", child(key), s,
                                 allowed));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ParseError(fmt::format("unknown key '{}'", child(it.key())));
    }
  }

 private:
  std::string name() const { return path_.empty() ? "<root>" : path_; }
  ParseError type_error(const char* key, const char* want) const {
    return ParseError(fmt::format("key '{}' must be {}", child(key), want));
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::vector<market::UnitParams> read_units(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw ParseError(fmt::format("key '{}' must be an array", path));
  std::vector<market::UnitParams> units;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    market::UnitParams u;
    u.id = static_cast<int>(i) + 1;
    Reader r(arr[i], fmt::format("{}[{}]", path, i));
    r.get("id", u.id);
    r.get("marginal_cost", u.marginal_cost);
    r.get("g_max", u.g_max);
    r.get("g_min", u.g_min);
    r.get("ramp_up", u.ramp_up);
    r.get("ramp_down", u.ramp_down);
    r.get("maint_cost", u.maint_cost);
    r.get("maint_block", u.maint_block);
    r.get("maint_required", u.maint_required);
    r.get("k_max", u.k_max);
    r.finish();
    units.push_back(u);
  }
  return units;
}

void read_axis(Reader& parent, const char* key, qlearn::Axis& ax) {
  if (const json* v = parent.take(key)) {
    Reader r(*v, parent.child(key));
    r.get("lo", ax.lo);
    r.get("hi", ax.hi);
    r.get("bins", ax.bins);
    r.finish();
  }
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

sim::ExperimentConfig parse_config_text(const std::string& text) {
  const json root = parse_json(text, "config");
  sim::ExperimentConfig cfg;
  Reader r(root, "");
  if (const json* u = r.take("units")) cfg.units = read_units(*u, "units");
  r.get("episodes", cfg.episodes);
  r.get("steps_per_episode", cfg.steps);
  r.get("ramps_enabled", cfg.ramps_enabled);
  r.get("seed", cfg.seed);
  r.get("out_dir", cfg.out_dir);
  cfg.learner = r.enum_value("learner", cfg.learner,
                             {{"ddpg", sim::Learner::Ddpg}, {"qlearn", sim::Learner::QLearn}});
  if (const json* v = r.take("demand")) {
    Reader d(*v, "demand");
    d.get("lo", cfg.demand.lo);
    d.get("hi", cfg.demand.hi);
    d.get("amplitude", cfg.demand.amplitude);
    d.get("noise", cfg.demand.noise);
    d.get("period", cfg.demand.period);
    d.finish();
  }
  if (const json* v = r.take("filter")) {
    Reader f(*v, "filter");
    cfg.mode = f.enum_value("mode", cfg.mode,
                            {{"intent", safety::Mode::Intent}, {"literal", safety::Mode::Literal}});
    f.get("max_concurrent", cfg.max_concurrent);
    f.get("window", cfg.window);
    f.finish();
  }
  if (const json* v = r.take("ddpg")) {
    Reader d(*v, "ddpg");
    auto& c = cfg.ddpg;
    d.get("hidden1", c.hidden1);
    d.get("hidden2", c.hidden2);
    d.get("gamma", c.gamma);
    d.get("critic_lr", c.critic_lr);
    d.get("actor_lr", c.actor_lr);
    d.get("tau", c.tau);
    d.get("actor_tau", c.actor_tau);
    d.get("buffer_capacity", c.buffer_capacity);
    d.get("batch_size", c.batch_size);
    d.get("sigma_start", c.sigma_start);
    d.get("sigma_end", c.sigma_end);
    d.get("reward_scale", c.reward_scale);
    c.init = d.enum_value("init", c.init,
                          {{"small_uniform", ddpg::InitScheme::SmallUniform},
                           {"wide_positive", ddpg::InitScheme::WidePositive}});
    d.get("init_range", c.init_range);
    d.get("bound_penalty", c.bound_penalty);
    d.finish();
  }
  if (const json* v = r.take("qlearn")) {
    Reader q(*v, "qlearn");
    auto& c = cfg.qlearn;
    read_axis(q, "price_bins", c.binning.price);
    read_axis(q, "demand_bins", c.binning.demand);
    q.get("bid_levels", c.bid_levels);
    q.get("alpha", c.alpha);
    q.get("gamma", c.gamma);
    q.get("epsilon_start", c.epsilon_start);
    q.get("epsilon_end", c.epsilon_end);
    q.finish();
  }
  r.finish();
  sim::validate(cfg);
  return cfg;
}

sim::ExperimentConfig parse_config(const std::string& path) {
  return parse_config_text(read_file(path));
}

std::string to_json(const sim::ExperimentConfig& cfg) {
  json units = json::array();
  for (const auto& u : cfg.units) {
    units.push_back(json{{"id", u.id},
                         {"marginal_cost", u.marginal_cost},
                         {"g_max", u.g_max},
                         {"g_min", u.g_min},
                         {"ramp_up", u.ramp_up},
                         {"ramp_down", u.ramp_down},
                         {"maint_cost", u.maint_cost},
                         {"maint_block", u.maint_block},
                         {"maint_required", u.maint_required},
                         {"k_max", u.k_max}});
  }
  const auto& d = cfg.ddpg;
  const auto& q = cfg.qlearn;
  auto axis = [](const qlearn::Axis& a) { return json{{"lo", a.lo}, {"hi", a.hi}, {"bins", a.bins}}; };
  json j = {
      {"units", units},
      {"episodes", cfg.episodes},
      {"steps_per_episode", cfg.steps},
      {"demand",
       {{"lo", cfg.demand.lo},
        {"hi", cfg.demand.hi},
        {"amplitude", cfg.demand.amplitude},
        {"noise", cfg.demand.noise},
        {"period", cfg.demand.period}}},
      {"filter",
       {{"mode", cfg.mode == safety::Mode::Intent ? "intent" : "literal"},
        {"max_concurrent", cfg.max_concurrent},
        {"window", cfg.window}}},
      {"ramps_enabled", cfg.ramps_enabled},
      {"learner", cfg.learner == sim::Learner::Ddpg ? "ddpg" : "qlearn"},
      {"ddpg",
       {{"hidden1", d.hidden1},
        {"hidden2", d.hidden2},
        {"gamma", d.gamma},
        {"critic_lr", d.critic_lr},
        {"actor_lr", d.actor_lr},
        {"tau", d.tau},
        {"actor_tau", d.actor_tau},
        {"buffer_capacity", d.buffer_capacity},
        {"batch_size", d.batch_size},
        {"sigma_start", d.sigma_start},
        {"sigma_end", d.sigma_end},
        {"reward_scale", d.reward_scale},
        {"init", d.init == ddpg::InitScheme::SmallUniform ? "small_uniform" : "wide_positive"},
        {"init_range", d.init_range},
        {"bound_penalty", d.bound_penalty}}},
      {"qlearn",
       {{"price_bins", axis(q.binning.price)},
        {"demand_bins", axis(q.binning.demand)},
        {"bid_levels", q.bid_levels},
        {"alpha", q.alpha},
        {"gamma", q.gamma},
        {"epsilon_start", q.epsilon_start},
        {"epsilon_end", q.epsilon_end}}},
      {"seed", cfg.seed},
      {"out_dir", cfg.out_dir},
  };
  return j.dump(2) + "\n";
}

market::MarketInstance parse_instance(const std::string& path,
                                      const std::vector<market::UnitParams>& units) {
  const std::string text = read_file(path);
  const json root = parse_json(text, path);
  market::MarketInstance inst;
  inst.units = units;
  Reader r(root, "");
  if (const json* u = r.take("units")) inst.units = read_units(*u, "units");
  r.get("bids", inst.bids);
  std::vector<int> maint;
  r.get("maint", maint);
  for (int m : maint) {
    if (m != 0 && m != 1) throw ParseError("key 'maint' must hold 0/1 entries");
    inst.maint.push_back(static_cast<std::uint8_t>(m));
  }
  if (inst.bids.empty()) inst.bids.assign(inst.units.size(), 1.0);
  if (inst.maint.empty()) inst.maint.assign(inst.units.size(), 0);
  if (const json* d = r.take("demand")) {
    if (!d->is_number()) throw ParseError("key 'demand' must be a number");
    inst.demand = d->get<double>();
  } else {
    throw ParseError("key 'demand' is required");
  }
  std::vector<double> prev;
  r.get("prev_gen", prev);
  if (!prev.empty()) inst.prev_gen = prev;
  r.get("ramps_enabled", inst.ramps_enabled);
  r.finish();
  return inst;
}

safety::SafetyState parse_state(const std::string& path, const safety::FilterConfig& cfg) {
  const std::string text = read_file(path);
  const json root = parse_json(text, path);
  safety::SafetyState s = safety::initial_state(cfg);
  Reader r(root, "");
  r.get("t", s.t);
  r.get("since_maint", s.since_maint);
  r.get("block_progress", s.block_progress);
  r.get("window_coverage", s.window_coverage);
  if (const json* rec = r.take("recent")) {
    if (!rec->is_array()) throw ParseError("key 'recent' must be an array of arrays");
    s.recent.clear();
    for (const json& row : *rec) {
      if (!row.is_array()) throw ParseError("key 'recent' must be an array of arrays");
      safety::Bits bits;
      for (const json& b : row) {
        if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1)) {
          throw ParseError("key 'recent' must hold 0/1 entries");
        }
        bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
      }
      s.recent.push_back(std::move(bits));
    }
  }
  r.finish();
  const std::size_t n = cfg.units();
  if (s.since_maint.size() != n || s.block_progress.size() != n ||
      s.window_coverage.size() != n || s.recent.size() != n) {
    throw ParseError(fmt::format("state vectors must have one entry per unit ({})", n));
  }
  return s;
}

}  // namespace safebid::config
