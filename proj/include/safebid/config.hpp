#pragma once

#include <string>

#include "safebid/market.hpp"
#include "safebid/safety.hpp"
#include "safebid/sim.hpp"

namespace safebid::config {

// Strict JSON reading: unknown keys and wrong types raise ParseError naming
// the key path, syntax errors report line and column. Semantic checks then
// raise ValidationError. Every key is optional and defaults to the values in
// config/default.json.
sim::ExperimentConfig parse_config_text(const std::string& text);
sim::ExperimentConfig parse_config(const std::string& path);

std::string to_json(const sim::ExperimentConfig& cfg);

// {"bids": [...], "maint": [...], "demand": d, "prev_gen": [...],
//  "ramps_enabled": bool, "units": [...]}; units default to `units`.
market::MarketInstance parse_instance(const std::string& path,
                                      const std::vector<market::UnitParams>& units);

// {"t": .., "since_maint": [..], "block_progress": [..],
//  "window_coverage": [..], "recent": [[..], ..]}; missing fields keep the
// values of the initial state.
safety::SafetyState parse_state(const std::string& path, const safety::FilterConfig& cfg);

std::string read_file(const std::string& path);

}  // namespace safebid::config
