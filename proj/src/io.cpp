#include "blockpf/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "blockpf/errors.hpp"

namespace blockpf {

namespace {

void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

template <class T>
T get_field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + "." + key + ": missing");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

std::vector<std::size_t> sizes_field(const Json& v, std::size_t n, const std::string& where) {
  try {
    if (v.is_number_integer()) {
      const long s = v.get<long>();
      if (s <= 0) throw ConfigError(where + ": sizes must be positive");
      return std::vector<std::size_t>(n, static_cast<std::size_t>(s));
    }
    auto out = v.get<std::vector<long>>();
    if (out.size() != n) throw ConfigError(where + ": expected " + std::to_string(n) + " entries");
    std::vector<std::size_t> sizes;
    for (long s : out) {
      if (s <= 0) throw ConfigError(where + ": sizes must be positive");
      sizes.push_back(static_cast<std::size_t>(s));
    }
    return sizes;
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": expected an integer or a list of integers");
  }
}

std::vector<double> flatten_table(const Json& t, const std::string& where) {
  std::vector<double> out;
  if (!t.is_array()) throw ConfigError(where + ": expected an array");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Json& e = t[i];
    if (e.is_number()) {
      out.push_back(e.get<double>());
    } else if (e.is_array()) {
      for (std::size_t c = 0; c < e.size(); ++c) {
        if (!e[c].is_number()) {
          throw ConfigError(where + "[" + std::to_string(i) + "][" + std::to_string(c) + "]: not a number");
        }
        out.push_back(e[c].get<double>());
      }
    } else {
      throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number or a row");
    }
  }
  return out;
}

SpatialGraph parse_graph(const Json& g) {
  if (g.contains("q")) {
    reject_unknown_keys(g, {"q", "d", "r"}, "graph");
    return build_lattice(get_field<int>(g, "q", "graph"), get_field<int>(g, "d", "graph"),
                         get_field<int>(g, "r", "graph"));
  }
  reject_unknown_keys(g, {"vertex_count", "edges", "r"}, "graph");
  const auto n = get_field<std::size_t>(g, "vertex_count", "graph");
  std::vector<std::pair<Vertex, Vertex>> edges;
  if (g.contains("edges")) {
    const Json& e = g.at("edges");
    if (!e.is_array()) throw ConfigError("graph.edges: expected an array of pairs");
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (!e[i].is_array() || e[i].size() != 2) {
        throw ConfigError("graph.edges[" + std::to_string(i) + "]: expected a vertex pair");
      }
      edges.emplace_back(e[i][0].get<Vertex>(), e[i][1].get<Vertex>());
    }
  }
  return SpatialGraph(n, std::move(edges), get_field<int>(g, "r", "graph"));
}

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "ensemble dump assumes little-endian");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T take(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ConfigError("ensemble dump: truncated input");
  return value;
}

}  // namespace

ModelDocument parse_model(const Json& doc) {
  reject_unknown_keys(doc, {"graph", "partition", "alphabets", "trans", "obs"}, "model");
  if (!doc.contains("graph")) throw ConfigError("model.graph: missing");
  SpatialGraph graph = parse_graph(doc.at("graph"));
  const std::size_t n = graph.vertex_count();
  if (!doc.contains("alphabets")) throw ConfigError("model.alphabets: missing");
  const Json& alpha = doc.at("alphabets");
  reject_unknown_keys(alpha, {"state", "obs"}, "alphabets");
  if (!alpha.contains("state")) throw ConfigError("alphabets.state: missing");
  if (!alpha.contains("obs")) throw ConfigError("alphabets.obs: missing");
  auto state_sizes = sizes_field(alpha.at("state"), n, "alphabets.state");
  auto obs_sizes = sizes_field(alpha.at("obs"), n, "alphabets.obs");

  for (const char* key : {"trans", "obs"}) {
    if (!doc.contains(key)) throw ConfigError(std::string("model.") + key + ": missing");
    if (!doc.at(key).is_array() || doc.at(key).size() != n) {
      throw ConfigError(std::string(key) + ": expected one table per vertex (" + std::to_string(n) + ")");
    }
  }
  std::vector<std::vector<double>> trans(n);
  std::vector<std::vector<double>> obs(n);
  for (Vertex v = 0; v < n; ++v) {
    trans[v] = flatten_table(doc.at("trans")[v], "trans[" + std::to_string(v) + "]");
    obs[v] = flatten_table(doc.at("obs")[v], "obs[" + std::to_string(v) + "]");
  }
  LocalHMM model(graph, std::move(state_sizes), std::move(obs_sizes), std::move(trans), std::move(obs));

  std::optional<BlockPartition> partition;
  if (doc.contains("partition")) {
    const Json& p = doc.at("partition");
    if (p.contains("b")) {
      reject_unknown_keys(p, {"b", "relaxed"}, "partition");
      if (graph.lattice_dim() == 0) throw ConfigError("partition.b: requires a lattice graph");
      const int b = get_field<int>(p, "b", "partition");
      const bool relaxed = p.value("relaxed", false);
      partition = relaxed ? build_block_cover_relaxed(model.graph(), graph.lattice_dim(),
                                                      graph.lattice_half_width(), b)
                          : build_block_cover(model.graph(), graph.lattice_dim(),
                                              graph.lattice_half_width(), b);
    } else {
      reject_unknown_keys(p, {"blocks"}, "partition");
      std::vector<VertexSet> blocks;
      try {
        blocks = p.at("blocks").get<std::vector<VertexSet>>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("partition.blocks: expected a list of vertex lists");
      }
      try {
        partition = build_partition_arbitrary(model.graph(), std::move(blocks));
      } catch (const ValidationError& e) {
        throw ConfigError(e.what());
      }
    }
  }
  return ModelDocument{std::move(model), std::move(partition)};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

ModelDocument load_model(const std::filesystem::path& path) { return parse_model(read_json_file(path)); }

Json model_to_json(const LocalHMM& model, const BlockPartition* partition) {
  const SpatialGraph& g = model.graph();
  Json doc;
  if (g.lattice_dim() > 0) {
    doc["graph"] = {{"q", g.lattice_dim()}, {"d", g.lattice_half_width()}, {"r", g.radius()}};
  } else {
    Json edges = Json::array();
    for (const auto& [a, b] : g.edges()) edges.push_back({a, b});
    doc["graph"] = {{"vertex_count", g.vertex_count()}, {"edges", edges}, {"r", g.radius()}};
  }
  if (partition) doc["partition"] = {{"blocks", partition->blocks()}};
  doc["alphabets"] = {{"state", model.state_sizes()}, {"obs", model.obs_sizes()}};
  Json trans = Json::array();
  Json obs = Json::array();
  for (Vertex v = 0; v < model.vertex_count(); ++v) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < model.trans_rows(v); ++r) {
      const auto row = model.trans_row(v, r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    trans.push_back(std::move(rows));
    Json orows = Json::array();
    const auto& t = model.obs_table(v);
    for (std::size_t x = 0; x < model.state_size(v); ++x) {
      orows.push_back(std::vector<double>(t.begin() + static_cast<long>(x * model.obs_size(v)),
                                          t.begin() + static_cast<long>((x + 1) * model.obs_size(v))));
    }
    obs.push_back(std::move(orows));
  }
  doc["trans"] = std::move(trans);
  doc["obs"] = std::move(obs);
  return doc;
}

Json distribution_to_json(const DistributionTable& dist) {
  return {{"radices", dist.radices()}, {"order", "row-major, first coordinate most significant"},
          {"probs", dist.probs()}};
}

DistributionTable distribution_from_json(const Json& doc) {
  return DistributionTable(get_field<std::vector<std::size_t>>(doc, "radices", "distribution"),
                           get_field<std::vector<double>>(doc, "probs", "distribution"));
}

Json factorized_to_json(const FactorizedDistribution& dist) {
  Json blocks = Json::array();
  for (std::size_t k = 0; k < dist.block_count(); ++k) {
    Json b = distribution_to_json(dist.block_table(k));
    b["vertices"] = dist.blocks()[k];
    blocks.push_back(std::move(b));
  }
  return {{"blocks", std::move(blocks)}};
}

Json trajectory_to_json(const Trajectory& traj) {
  return {{"states", traj.states}, {"observations", traj.observations}};
}

Trajectory trajectory_from_json(const Json& doc) {
  Trajectory t;
  t.states = doc.value("states", std::vector<Configuration>{});
  t.observations = get_field<ObservationPath>(doc, "observations", "trajectory");
  return t;
}

Json report_to_json(const LocalErrorReport& report) {
  Json doc = {{"J", report.j},
              {"trials", report.trials},
              {"per_trial", report.per_trial},
              {"estimate", report.exact ? *report.exact : report.estimate},
              {"stderr", report.stderr_estimate},
              {"method", report.exact ? "exact" : "upper"},
              {"upper", report.estimate}};
  return doc;
}

Json certificate_to_json(const ComparisonCertificate& cert, const std::optional<std::vector<std::size_t>>& j) {
  Json doc = {{"C", cert.c}, {"b", cert.b}, {"dobrushin_norm", cert.dobrushin_norm},
              {"condition_holds", cert.d.has_value()}};
  if (cert.d) doc["D"] = *cert.d;
  if (j) {
    doc["J"] = *j;
    if (cert.d) doc["bound"] = comparison_bound(cert, *j);
  }
  return doc;
}

FiniteMRF mrf_from_json(const Json& doc) {
  reject_unknown_keys(doc, {"alphabets", "density", "log_density"}, "mrf");
  auto alphabets = get_field<std::vector<std::size_t>>(doc, "alphabets", "mrf");
  std::vector<double> density;
  if (doc.contains("log_density")) {
    density = get_field<std::vector<double>>(doc, "log_density", "mrf");
    for (double& x : density) x = std::exp(x);
  } else {
    density = get_field<std::vector<double>>(doc, "density", "mrf");
  }
  return FiniteMRF(std::move(alphabets), std::move(density));
}

void write_ensemble(std::ostream& out, const ParticleEnsemble& ens, std::span<const std::size_t> state_sizes) {
  out.write("BPFE", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, ens.size());
  put<std::uint64_t>(out, ens.vertex_count());
  put<std::uint64_t>(out, ens.blocks().size());
  put<std::uint32_t>(out, ens.mode() == FilterKind::kBootstrap ? 0u : 1u);
  for (std::size_t s : state_sizes) put<std::uint64_t>(out, s);
  for (const auto& b : ens.blocks()) {
    put<std::uint64_t>(out, b.size());
    for (Vertex v : b) put<std::uint64_t>(out, v);
  }
  for (State s : ens.states()) put<std::int32_t>(out, s);
  for (const auto& w : ens.block_weights()) {
    for (double x : w) put<double>(out, x);
  }
}

ParticleEnsemble read_ensemble(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "BPFE", 4) != 0) throw ConfigError("ensemble dump: bad magic");
  if (take<std::uint32_t>(in) != 1) throw ConfigError("ensemble dump: unsupported version");
  const auto n = take<std::uint64_t>(in);
  const auto nv = take<std::uint64_t>(in);
  const auto nb = take<std::uint64_t>(in);
  const auto mode = take<std::uint32_t>(in) == 0 ? FilterKind::kBootstrap : FilterKind::kBlock;
  for (std::uint64_t v = 0; v < nv; ++v) take<std::uint64_t>(in);
  std::vector<VertexSet> blocks(nb);
  for (auto& b : blocks) {
    const auto size = take<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < size; ++i) b.push_back(take<std::uint64_t>(in));
  }
  std::vector<State> states(n * nv);
  for (State& s : states) s = take<std::int32_t>(in);
  std::vector<std::vector<double>> weights(nb, std::vector<double>(n));
  for (auto& w : weights) {
    for (double& x : w) x = take<double>(in);
  }
  return ParticleEnsemble(mode, nv, std::move(blocks), std::move(states), std::move(weights));
}

}  // namespace blockpf
