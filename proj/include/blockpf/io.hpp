#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "blockpf/dobrushin.hpp"
#include "blockpf/exact.hpp"
#include "blockpf/metrics.hpp"
#include "blockpf/model.hpp"
#include "blockpf/particle.hpp"
#include "json.hpp"

namespace blockpf {

using Json = nlohmann::json;

// Model document:
//   graph:      {"q", "d", "r"} for a lattice, or {"vertex_count", "edges", "r"}
//   partition:  optional, {"b"} (lattice cover, "relaxed": true allows ragged
//               edge blocks) or {"blocks": [[...], ...]}
//   alphabets:  {"state": int | [int...], "obs": int | [int...]}
//   trans:      per vertex, list of rows (one per N(v) configuration in
//               row-major mixed-radix order over N(v) ascending), or flat
//   obs:        per vertex, list of |X^v| rows over Y^v, or flat
// Rows deviating from sum 1 by at most 1e-12 are renormalized, otherwise
// the document is rejected with a ConfigError naming the field.
struct ModelDocument {
  LocalHMM model;
  std::optional<BlockPartition> partition;
};

ModelDocument parse_model(const Json& doc);
ModelDocument load_model(const std::filesystem::path& path);
Json model_to_json(const LocalHMM& model, const BlockPartition* partition = nullptr);

Json distribution_to_json(const DistributionTable& dist);
DistributionTable distribution_from_json(const Json& doc);
Json factorized_to_json(const FactorizedDistribution& dist);

Json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const Json& doc);

Json report_to_json(const LocalErrorReport& report);
Json certificate_to_json(const ComparisonCertificate& cert,
                         const std::optional<std::vector<std::size_t>>& j = std::nullopt);
FiniteMRF mrf_from_json(const Json& doc);

// Binary columnar dump: magic "BPFE", u32 version, u64 N, u64 |V|, u64 block
// count, |V| x u64 alphabet sizes, per block (u64 size, size x u64 vertex),
// N*|V| x i32 states (row-major by particle), then per block N x f64 weights.
// Little-endian.
void write_ensemble(std::ostream& out, const ParticleEnsemble& ens,
                    std::span<const std::size_t> state_sizes);
ParticleEnsemble read_ensemble(std::istream& in);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace blockpf
