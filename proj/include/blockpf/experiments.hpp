#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "blockpf/io.hpp"

namespace blockpf {

struct ResultRow {
  std::string scenario;
  std::string parameters;  // "key=value;key=value"
  std::string metric;
  double value = 0.0;
  double stderr_value = 0.0;
  double wall_time = 0.0;    // seconds; kept out of the CSV so reruns are byte-identical
  std::string seed_lineage;  // master seed plus derivation path
};

struct AssertionResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ScenarioResult {
  std::string scenario;
  Json config;
  std::vector<ResultRow> rows;
  std::vector<AssertionResult> assertions;
  std::vector<std::string> flags;  // informational (e.g. "flat", "outside_mixing_regime")
  double wall_time = 0.0;

  bool all_passed() const;
};

// Canonical scenario ids: bias_decay, variance_scaling, time_uniformity,
// dimension_sweep, blocksize_tradeoff, filter_stability, collapse. A
// "scenario_" prefix is accepted.
std::vector<std::string> scenario_ids();
std::string canonical_scenario_id(const std::string& id);  // ConfigError if unknown

Json default_config(const std::string& scenario);

// Merges a user document and dotted-path overrides ("trials=50",
// "tolerance.slope_tol=0.01", "particles=[100,200]") into the defaults.
// Keys absent from the defaults are rejected, as are type changes.
Json resolve_config(const std::string& scenario, const Json& user = Json::object(),
                    const std::vector<std::string>& overrides = {});

ScenarioResult run_scenario(const Json& config);

ScenarioResult scenario_bias_decay(const Json& config);
ScenarioResult scenario_variance_scaling(const Json& config);
ScenarioResult scenario_time_uniformity(const Json& config);
ScenarioResult scenario_dimension_sweep(const Json& config);
ScenarioResult scenario_blocksize_tradeoff(const Json& config);
ScenarioResult scenario_filter_stability(const Json& config);
ScenarioResult scenario_collapse(const Json& config);

// RFC-4180 CSV: scenario,parameters,metric,value,stderr,seed_lineage
std::string rows_to_csv(const std::vector<ResultRow>& rows);
Json scenario_metadata(const ScenarioResult& result);
// Writes <dir>/<scenario>.csv and <dir>/<scenario>.meta.json.
void write_scenario_outputs(const ScenarioResult& result, const std::filesystem::path& dir);

// Least-squares slope of ys against xs.
double fitted_slope(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace blockpf
