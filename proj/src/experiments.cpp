#include "blockpf/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "blockpf/errors.hpp"
#include "blockpf/parallel.hpp"

namespace blockpf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string params(std::initializer_list<std::pair<const char*, std::string>> kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    if (!out.empty()) out += ';';
    out += k;
    out += '=';
    out += v;
  }
  return out;
}

template <class T>
std::string str(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    return num(v);
  } else {
    return std::to_string(v);
  }
}

// Seeds for independent purposes derived from the master seed.
enum class SeedPurpose : std::uint64_t { kObservations = 101, kFilter = 102, kTrialObservations = 103 };

std::uint64_t derive_seed(std::uint64_t master, SeedPurpose purpose, std::uint64_t index = 0) {
  return Stream(master).child({static_cast<std::uint64_t>(purpose), index}).id();
}

std::string lineage(std::uint64_t master, const std::string& path) {
  return "master=" + std::to_string(master) + "/" + path;
}

const std::map<std::string, Json>& defaults_table() {
  static const std::map<std::string, Json> table = [] {
    const Json chain_model = {{"kind", "chain"},       {"vertices", 8},      {"r", 1},
                              {"state_size", 2},       {"obs_size", 2},      {"mixing", 0.6},
                              {"obs_mixing", 0.3},     {"homogeneous", false}, {"seed", 1}};
    auto with_vertices = [&](int v) {
      Json m = chain_model;
      m["vertices"] = v;
      return m;
    };
    std::map<std::string, Json> t;
    t["bias_decay"] = {{"scenario", "bias_decay"}, {"seed", 2024}, {"model", with_vertices(12)},
                       {"model_file", ""},         {"block_size", 4}, {"horizon", 20},
                       {"tolerance", {{"profile_slack", 1e-12}}}};
    t["variance_scaling"] = {{"scenario", "variance_scaling"},
                             {"seed", 2024},
                             {"model", with_vertices(4)},
                             {"model_file", ""},
                             {"block_size", 2},
                             {"horizon", 5},
                             {"particles", {200, 800, 3200, 12800}},
                             {"trials", 200},
                             {"tolerance", {{"slope_target", -0.5}, {"slope_tol", 0.15}, {"stderr_slack", 2.0}}}};
    t["time_uniformity"] = {{"scenario", "time_uniformity"},
                            {"seed", 2024},
                            {"model", with_vertices(8)},
                            {"model_file", ""},
                            {"block_size", 2},
                            {"horizons", {5, 10, 20, 50}},
                            {"particles", 1000},
                            {"trials", 200},
                            {"tolerance", {{"max_ratio", 2.0}, {"min_kernel_entry", 0.05}}}};
    t["dimension_sweep"] = {{"scenario", "dimension_sweep"},
                            {"seed", 2024},
                            {"model", with_vertices(8)},
                            {"vertex_grid", {8, 16, 32}},
                            {"block_size", 4},
                            {"measured", {0, 1, 2, 3}},
                            {"horizon", 10},
                            {"particles", 500},
                            {"trials", 100},
                            {"tolerance", {{"stderr_slack", 2.0}}}};
    t["blocksize_tradeoff"] = {{"scenario", "blocksize_tradeoff"},
                               {"seed", 2024},
                               {"model", with_vertices(12)},
                               {"model_file", ""},
                               {"block_sizes", {1, 2, 3, 4, 6, 12}},
                               {"horizon", 10},
                               {"particles", 400},
                               {"trials", 100},
                               {"tolerance", {{"stderr_slack", 2.0}}}};
    t["filter_stability"] = {{"scenario", "filter_stability"}, {"seed", 2024},
                             {"model", with_vertices(8)},      {"model_file", ""},
                             {"horizon", 40},                  {"tolerance", {{"threshold", 1e-3}}}};
    Json product = chain_model;
    product["kind"] = "product";
    product["vertices"] = 1;
    t["collapse"] = {{"scenario", "collapse"},
                     {"seed", 2024},
                     {"model", product},
                     {"copies", {1, 5, 25, 125}},
                     {"particles", 100},
                     {"trials", 100},
                     {"tolerance", {{"stderr_slack", 2.0}}}};
    return t;
  }();
  return table;
}

void merge_checked(Json& base, const Json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    Json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, path);
      continue;
    }
    const bool numeric_ok = slot.is_number() && value.is_number() &&
                            !(slot.is_number_integer() && value.is_number_float());
    if (slot.type() != value.type() && !numeric_ok) {
      throw ConfigError("config: key '" + path + "' expects " + std::string(slot.type_name()) +
                        ", got " + std::string(value.type_name()));
    }
    if (slot.is_number_integer() && value.is_number_integer() && value.get<long long>() < 0 &&
        key != "seed") {
      throw ConfigError("config: key '" + path + "' must be nonnegative");
    }
    slot = value;
  }
}

struct Setup {
  LocalHMM model;
  BlockPartition partition;
};

LocalHMM model_from_config(const Json& m, std::size_t vertices_override = 0) {
  RandomModelOptions opt;
  opt.state_size = m.at("state_size").get<std::size_t>();
  opt.obs_size = m.at("obs_size").get<std::size_t>();
  opt.mixing = m.at("mixing").get<double>();
  opt.obs_mixing = m.at("obs_mixing").get<double>();
  opt.homogeneous = m.at("homogeneous").get<bool>();
  const int r = m.at("r").get<int>();
  const std::size_t vertices = vertices_override ? vertices_override : m.at("vertices").get<std::size_t>();
  const auto seed = m.at("seed").get<std::uint64_t>();
  const std::string kind = m.at("kind").get<std::string>();
  if (kind == "chain") return random_local_hmm(build_chain(vertices, r), opt, seed);
  if (kind == "product") {
    opt.homogeneous = false;
    return build_product_model(random_local_hmm(build_edgeless(1, r), opt, seed), vertices);
  }
  throw ConfigError("config: model.kind must be 'chain' or 'product', got '" + kind + "'");
}

Setup setup_from_config(const Json& cfg, std::size_t block_size) {
  const std::string file = cfg.value("model_file", std::string());
  if (!file.empty()) {
    ModelDocument doc = load_model(file);
    if (doc.partition) return {std::move(doc.model), std::move(*doc.partition)};
    BlockPartition p = build_chain_blocks(doc.model.graph(), block_size);
    return {std::move(doc.model), std::move(p)};
  }
  LocalHMM model = model_from_config(cfg.at("model"));
  BlockPartition p = build_chain_blocks(model.graph(), block_size);
  return {std::move(model), std::move(p)};
}

// One error report per (recorded time, measured vertex), comparing the
// particle filter's single-vertex marginals with reference tables.
using ReferenceFn = std::function<const DistributionTable&(std::size_t time_index, std::size_t vertex_index)>;

std::vector<std::vector<LocalErrorReport>> particle_error_reports(
    FilterKind kind, const LocalHMM& model, const BlockPartition* partition, const Configuration& x0,
    const ObservationPath& obs, std::size_t n_particles, std::size_t trials, const Stream& stream,
    const std::vector<std::size_t>& times, const VertexSet& vertices, const ReferenceFn& reference) {
  // deltas[trial][time][vertex]
  std::vector<std::vector<std::vector<SignedTable>>> deltas(
      trials, std::vector<std::vector<SignedTable>>(times.size(), std::vector<SignedTable>(vertices.size())));
  parallel_for(trials, [&](std::size_t t) {
    const Stream trial = stream.child({static_cast<std::uint64_t>(Phase::kTrial), t});
    run_filter(kind, model, partition, x0, obs, n_particles, trial,
               [&](std::size_t k, const ParticleEnsemble& e) {
                 const auto it = std::find(times.begin(), times.end(), k);
                 if (it == times.end()) return;
                 const auto ti = static_cast<std::size_t>(it - times.begin());
                 for (std::size_t vi = 0; vi < vertices.size(); ++vi) {
                   const DistributionTable est = ensemble_marginal(e, {vertices[vi]}, model.state_sizes());
                   const DistributionTable& ref = reference(ti, vi);
                   SignedTable d(ref.size());
                   for (std::size_t x = 0; x < d.size(); ++x) d[x] = est[x] - ref[x];
                   deltas[t][ti][vi] = std::move(d);
                 }
               });
  });
  std::vector<std::vector<LocalErrorReport>> out(times.size());
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    for (std::size_t vi = 0; vi < vertices.size(); ++vi) {
      std::vector<SignedTable> per_trial(trials);
      for (std::size_t t = 0; t < trials; ++t) per_trial[t] = std::move(deltas[t][ti][vi]);
      out[ti].push_back(make_local_error_report({vertices[vi]}, per_trial));
    }
  }
  return out;
}

struct Aggregate {
  double value = 0.0;
  double stderr_value = 0.0;
};

// Mean over vertices of the per-vertex RMSE.
Aggregate mean_rmse(const std::vector<LocalErrorReport>& reports) {
  Aggregate a;
  double var = 0.0;
  for (const auto& r : reports) {
    a.value += r.estimate;
    var += r.stderr_estimate * r.stderr_estimate;
  }
  const auto m = static_cast<double>(reports.size());
  a.value /= m;
  a.stderr_value = std::sqrt(var) / m;
  return a;
}

VertexSet all_vertices(std::size_t n) {
  VertexSet v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void record(ScenarioResult& res, std::string name, bool passed, std::string detail) {
  res.assertions.push_back({std::move(name), passed, std::move(detail)});
}

}  // namespace

bool ScenarioResult::all_passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const AssertionResult& a) { return a.passed; });
}

std::vector<std::string> scenario_ids() {
  std::vector<std::string> ids;
  for (const auto& [k, _] : defaults_table()) ids.push_back(k);
  return ids;
}

std::string canonical_scenario_id(const std::string& id) {
  std::string s = id;
  if (s.rfind("scenario_", 0) == 0) s = s.substr(9);
  if (defaults_table().count(s) == 0) {
    std::string known;
    for (const auto& k : scenario_ids()) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown scenario '" + id + "'; available: " + known);
  }
  return s;
}

Json default_config(const std::string& scenario) {
  return defaults_table().at(canonical_scenario_id(scenario));
}

Json resolve_config(const std::string& scenario, const Json& user, const std::vector<std::string>& overrides) {
  Json cfg = default_config(scenario);
  Json patch = user;
  if (patch.is_null()) patch = Json::object();
  if (patch.contains("scenario")) {
    if (canonical_scenario_id(patch.at("scenario").get<std::string>()) != cfg.at("scenario")) {
      throw ConfigError("config: scenario field disagrees with the requested scenario");
    }
    patch.erase("scenario");
  }
  merge_checked(cfg, patch, "");
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "' is not key=value");
    const std::string path = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    Json value;
    try {
      value = Json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      value = raw;
    }
    // Build a nested patch from the dotted path.
    Json nested = value;
    std::vector<std::string> parts;
    std::stringstream ss(path);
    for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
    for (std::size_t i = parts.size(); i-- > 0;) nested = Json{{parts[i], nested}};
    merge_checked(cfg, nested, "");
  }
  return cfg;
}

ScenarioResult run_scenario(const Json& config) {
  const std::string id = canonical_scenario_id(config.at("scenario").get<std::string>());
  const auto start = Clock::now();
  ScenarioResult res;
  if (id == "bias_decay") res = scenario_bias_decay(config);
  else if (id == "variance_scaling") res = scenario_variance_scaling(config);
  else if (id == "time_uniformity") res = scenario_time_uniformity(config);
  else if (id == "dimension_sweep") res = scenario_dimension_sweep(config);
  else if (id == "blocksize_tradeoff") res = scenario_blocksize_tradeoff(config);
  else if (id == "filter_stability") res = scenario_filter_stability(config);
  else res = scenario_collapse(config);
  res.wall_time = seconds_since(start);
  return res;
}

double fitted_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return 0.0;
  const auto n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxx == 0.0 ? 0.0 : sxy / sxx;
}

// Exact bias of the block filter against the filter at every vertex of the
// middle block, grouped by distance to the block's inner boundary.
ScenarioResult scenario_bias_decay(const Json& cfg) {
  ScenarioResult res;
  res.scenario = "bias_decay";
  res.config = cfg;
  const auto master = cfg.at("seed").get<std::uint64_t>();
  const auto horizon = cfg.at("horizon").get<std::size_t>();
  const double slack = cfg.at("tolerance").at("profile_slack").get<double>();
  Setup s = setup_from_config(cfg, cfg.at("block_size").get<std::size_t>());
  const LocalHMM& model = s.model;
  const BlockPartition& part = s.partition;
  const Configuration x0(model.vertex_count(), 0);
  const std::uint64_t obs_seed = derive_seed(master, SeedPurpose::kObservations);
  const ObservationPath obs = simulate(model, x0, horizon, obs_seed).observations;
  const std::string lin = lineage(master, "observations");

  const auto start = Clock::now();
  const DistributionTable filt = exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x0), obs).back();
  const FactorizedDistribution blockf =
      exact_block_filter(model, part, FactorizedDistribution::point_mass(part, model.state_sizes(), x0), obs).back();
  const double elapsed = seconds_since(start);

  const std::size_t mid = part.block_count() / 2;
  const VertexSet& blk = part.block(mid);
  const VertexSet& boundary = part.inner_boundary(mid);
  std::map<int, std::vector<double>> by_distance;
  for (Vertex v : blk) {
    const double bias = local_tv(filt.marginal({v}), blockf.marginal({v}));
    const int dist = boundary.empty() ? -1 : model.graph().distance({v}, boundary);
    by_distance[dist].push_back(bias);
    res.rows.push_back({res.scenario, params({{"n", str(horizon)}, {"block", str(mid)}, {"v", str(v)}, {"dist", str(dist)}}),
                        "bias", bias, 0.0, elapsed, lin});
  }
  std::vector<double> dists;
  std::vector<double> profile;
  for (const auto& [d, biases] : by_distance) {
    const double mean = std::accumulate(biases.begin(), biases.end(), 0.0) / static_cast<double>(biases.size());
    dists.push_back(d);
    profile.push_back(mean);
    res.rows.push_back({res.scenario, params({{"n", str(horizon)}, {"dist", str(d)}}), "bias_profile", mean, 0.0,
                        elapsed, lin});
  }
  bool positive = profile.size() >= 2;
  std::vector<double> logs;
  for (double p : profile) {
    positive = positive && p > 0.0;
    logs.push_back(p > 0.0 ? std::log(p) : 0.0);
  }
  if (positive) {
    res.rows.push_back({res.scenario, params({{"n", str(horizon)}}), "log_bias_slope", fitted_slope(dists, logs), 0.0,
                        elapsed, lin});
  }
  bool nonincreasing = true;
  for (std::size_t i = 1; i < profile.size(); ++i) nonincreasing = nonincreasing && profile[i] <= profile[i - 1] + slack;
  record(res, "center_le_boundary", profile.back() <= profile.front() + slack,
         "center=" + num(profile.back()) + " boundary=" + num(profile.front()));
  record(res, "profile_nonincreasing", nonincreasing, "profile over distances to the inner boundary");
  return res;
}

// RMSE of the block particle filter against the exact block filter as a
// function of N; the log-log slope should be -1/2.
ScenarioResult scenario_variance_scaling(const Json& cfg) {
  ScenarioResult res;
  res.scenario = "variance_scaling";
  res.config = cfg;
  const auto master = cfg.at("seed").get<std::uint64_t>();
  const auto horizon = cfg.at("horizon").get<std::size_t>();
  const auto trials = cfg.at("trials").get<std::size_t>();
  const auto grid = cfg.at("particles").get<std::vector<std::size_t>>();
  const Json& tol = cfg.at("tolerance");
  if (grid.empty() || trials == 0) throw ConfigError("config: particles grid and trials must be nonempty");
  Setup s = setup_from_config(cfg, cfg.at("block_size").get<std::size_t>());
  const LocalHMM& model = s.model;
  const Configuration x0(model.vertex_count(), 0);
  const ObservationPath obs = simulate(model, x0, horizon, derive_seed(master, SeedPurpose::kObservations)).observations;
  const FactorizedDistribution ref =
      exact_block_filter(model, s.partition, FactorizedDistribution::point_mass(s.partition, model.state_sizes(), x0), obs)
          .back();
  const VertexSet vertices = all_vertices(model.vertex_count());
  std::vector<DistributionTable> ref_marg;
  for (Vertex v : vertices) ref_marg.push_back(ref.marginal({v}));

  std::vector<double> log_n;
  std::vector<double> log_rmse;
  std::vector<Aggregate> aggs;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const std::size_t n = grid[gi];
    const auto start = Clock::now();
    const Stream stream = Stream(derive_seed(master, SeedPurpose::kFilter, gi));
    const auto reports = particle_error_reports(
        FilterKind::kBlock, model, &s.partition, x0, obs, n, trials, stream, {horizon}, vertices,
        [&](std::size_t, std::size_t vi) -> const DistributionTable& { return ref_marg[vi]; });
    const Aggregate a = mean_rmse(reports[0]);
    const double elapsed = seconds_since(start);
    const std::string lin = lineage(master, "filter/" + std::to_string(gi));
    for (const auto& r : reports[0]) {
      res.rows.push_back({res.scenario, params({{"N", str(n)}, {"n", str(horizon)}, {"v", str(r.j.front())}}), "rmse_vertex",
                          r.estimate, r.stderr_estimate, elapsed, lin});
    }
    res.rows.push_back({res.scenario, params({{"N", str(n)}, {"n", str(horizon)}}), "rmse", a.value, a.stderr_value, elapsed, lin});
    aggs.push_back(a);
    log_n.push_back(std::log(static_cast<double>(n)));
    log_rmse.push_back(std::log(std::max(a.value, 1e-300)));
  }
  const double slope = fitted_slope(log_n, log_rmse);
  res.rows.push_back({res.scenario, params({{"n", str(horizon)}}), "loglog_slope", slope, 0.0, 0.0, lineage(master, "filter")});
  if (grid.size() >= 2) {
    const double target = tol.at("slope_target").get<double>();
    const double width = tol.at("slope_tol").get<double>();
    record(res, "slope_within_tolerance", std::abs(slope - target) <= width,
           "slope=" + num(slope) + " target=" + num(target) + "+-" + num(width));
    const double k = tol.at("stderr_slack").get<double>();
    bool mono = true;
    for (std::size_t i = 0; i < aggs.size(); ++i) {
      for (std::size_t j = 0; j < aggs.size(); ++j) {
        if (grid[i] < grid[j]) mono = mono && aggs[i].value >= aggs[j].value - k * aggs[j].stderr_value;
      }
    }
    record(res, "rmse_monotone_in_N", mono, "RMSE(N1) >= RMSE(N2) - k*stderr for N1 < N2");
  }
  for (const auto& a : aggs) {
    if (!std::isfinite(a.value)) record(res, "finite_values", false, "non-finite RMSE");
  }
  return res;
}

// Block particle filter error against the exact filter at several times of
// one run; the ratio max/min over times should stay bounded.
ScenarioResult scenario_time_uniformity(const Json& cfg) {
  ScenarioResult res;
  res.scenario = "time_uniformity";
  res.config = cfg;
  const auto master = cfg.at("seed").get<std::uint64_t>();
  auto times = cfg.at("horizons").get<std::vector<std::size_t>>();
  const auto n = cfg.at("particles").get<std::size_t>();
  const auto trials = cfg.at("trials").get<std::size_t>();
  const Json& tol = cfg.at("tolerance");
  if (times.empty() || trials == 0) throw ConfigError("config: horizons and trials must be nonempty");
  std::sort(times.begin(), times.end());
  Setup s = setup_from_config(cfg, cfg.at("block_size").get<std::size_t>());
  const LocalHMM& model = s.model;
  const Configuration x0(model.vertex_count(), 0);
  const ObservationPath obs = simulate(model, x0, times.back(), derive_seed(master, SeedPurpose::kObservations)).observations;
  const auto filt = exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x0), obs);
  const VertexSet vertices = all_vertices(model.vertex_count());
  std::vector<std::vector<DistributionTable>> ref(times.size());
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    for (Vertex v : vertices) ref[ti].push_back(filt[times[ti]].marginal({v}));
  }
  const auto start = Clock::now();
  const auto reports = particle_error_reports(
      FilterKind::kBlock, model, &s.partition, x0, obs, n, trials, Stream(derive_seed(master, SeedPurpose::kFilter)), times,
      vertices, [&](std::size_t ti, std::size_t vi) -> const DistributionTable& { return ref[ti][vi]; });
  const double elapsed = seconds_since(start);
  const std::string lin = lineage(master, "filter");
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const Aggregate a = mean_rmse(reports[ti]);
    lo = std::min(lo, a.value);
    hi = std::max(hi, a.value);
    res.rows.push_back({res.scenario, params({{"N", str(n)}, {"n", str(times[ti])}}), "rmse", a.value, a.stderr_value, elapsed, lin});
  }
  const double ratio = lo > 0.0 ? hi / lo : (hi == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
  res.rows.push_back({res.scenario, params({{"N", str(n)}}), "max_min_ratio", ratio, 0.0, elapsed, lin});
  const double eps_low = model.eps_bounds().first;
  const double threshold = tol.at("min_kernel_entry").get<double>();
  if (eps_low < threshold) {
    res.flags.push_back("outside_mixing_regime");
    res.rows.push_back({res.scenario, params({{"min_kernel_entry", num(eps_low)}}), "outside_mixing_regime", 1.0, 0.0, 0.0, lin});
  } else {
    const double max_ratio = tol.at("max_ratio").get<double>();
    record(res, "ratio_bounded", ratio <= max_ratio, "ratio=" + num(ratio) + " limit=" + num(max_ratio));
  }
  return res;
}

// Block PF local error (vs exact block filter) and bootstrap one-step ESS on
// chains of growing length. Each trial draws its own observation path.
ScenarioResult scenario_dimension_sweep(const Json& cfg) {
  ScenarioResult res;
  res.scenario = "dimension_sweep";
  res.config = cfg;
  const auto master = cfg.at("seed").get<std::uint64_t>();
  const auto grid = cfg.at("vertex_grid").get<std::vector<std::size_t>>();
  const auto block_size = cfg.at("block_size").get<std::size_t>();
  const auto measured = cfg.at("measured").get<VertexSet>();
  const auto horizon = cfg.at("horizon").get<std::size_t>();
  const auto n = cfg.at("particles").get<std::size_t>();
  const auto trials = cfg.at("trials").get<std::size_t>();
  const double k = cfg.at("tolerance").at("stderr_slack").get<double>();
  if (grid.empty() || trials == 0 || measured.empty()) throw ConfigError("config: grids, measured and trials must be nonempty");

  std::vector<Aggregate> errs;
  std::vector<Aggregate> ess;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const std::size_t nv = grid[gi];
    for (Vertex v : measured) {
      if (v >= nv) throw ConfigError("config: measured vertex " + std::to_string(v) + " does not exist for |V|=" + std::to_string(nv));
    }
    const LocalHMM model = model_from_config(cfg.at("model"), nv);
    const BlockPartition part = build_chain_blocks(model.graph(), block_size);
    const Configuration x0(nv, 0);
    const auto start = Clock::now();
    std::vector<std::vector<SignedTable>> deltas(measured.size(), std::vector<SignedTable>(trials));
    std::vector<double> ess_trial(trials);
    parallel_for(trials, [&](std::size_t t) {
      const ObservationPath obs =
          simulate(model, x0, horizon, derive_seed(master, SeedPurpose::kTrialObservations, t)).observations;
      const FactorizedDistribution ref =
          exact_block_filter(model, part, FactorizedDistribution::point_mass(part, model.state_sizes(), x0), obs).back();
      const Stream stream = Stream(derive_seed(master, SeedPurpose::kFilter, gi)).child(
          {static_cast<std::uint64_t>(Phase::kTrial), t});
      run_filter(FilterKind::kBlock, model, &part, x0, obs, n, stream.child(1),
                 [&](std::size_t step, const ParticleEnsemble& e) {
                   if (step != horizon) return;
                   for (std::size_t mi = 0; mi < measured.size(); ++mi) {
                     const DistributionTable est = ensemble_marginal(e, {measured[mi]}, model.state_sizes());
                     const DistributionTable truth = ref.marginal({measured[mi]});
                     SignedTable d(truth.size());
                     for (std::size_t x = 0; x < d.size(); ++x) d[x] = est[x] - truth[x];
                     deltas[mi][t] = std::move(d);
                   }
                 });
      const ParticleEnsemble boot = bootstrap_step(
          model, ParticleEnsemble::point_mass(FilterKind::kBootstrap, part, x0, n), obs.front(), stream.child(2));
      ess_trial[t] = effective_sample_size(boot.weights(0));
    });
    const double elapsed = seconds_since(start);
    const std::string lin = lineage(master, "trial_observations+filter/" + std::to_string(gi));
    Aggregate worst;
    for (std::size_t mi = 0; mi < measured.size(); ++mi) {
      const LocalErrorReport r = make_local_error_report({measured[mi]}, deltas[mi]);
      if (r.estimate > worst.value) worst = {r.estimate, r.stderr_estimate};
    }
    res.rows.push_back({res.scenario, params({{"V", str(nv)}, {"N", str(n)}}), "block_pf_max_local_error", worst.value,
                        worst.stderr_value, elapsed, lin});
    Aggregate e;
    e.value = std::accumulate(ess_trial.begin(), ess_trial.end(), 0.0) / static_cast<double>(trials);
    double var = 0.0;
    for (double x : ess_trial) var += (x - e.value) * (x - e.value);
    e.stderr_value = trials > 1 ? std::sqrt(var / static_cast<double>(trials - 1) / static_cast<double>(trials)) : 0.0;
    res.rows.push_back({res.scenario, params({{"V", str(nv)}, {"N", str(n)}}), "bootstrap_one_step_ess", e.value,
                        e.stderr_value, elapsed, lin});
    errs.push_back(worst);
    ess.push_back(e);
  }
  bool flat = true;
  for (std::size_t i = 0; i < errs.size(); ++i) {
    for (std::size_t j = i + 1; j < errs.size(); ++j) {
      const double se = std::hypot(errs[i].stderr_value, errs[j].stderr_value);
      flat = flat && std::abs(errs[i].value - errs[j].value) <= k * se;
    }
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < ess.size(); ++i) decreasing = decreasing && ess[i].value < ess[i - 1].value;
  if (grid.size() >= 2) {
    record(res, "block_pf_error_flat", flat, "pairwise |diff| <= " + num(k) + " combined stderr");
    record(res, "bootstrap_ess_decreasing", decreasing, "mean one-step ESS strictly decreasing in |V|");
  }
  return res;
}

// Total error (vs the exact filter) against block size at fixed N, with the
// exact bias alongside.
ScenarioResult scenario_blocksize_tradeoff(const Json& cfg) {
  ScenarioResult res;
  res.scenario = "blocksize_tradeoff";
  res.config = cfg;
  const auto master = cfg.at("seed").get<std::uint64_t>();
  auto sizes = cfg.at("block_sizes").get<std::vector<std::size_t>>();
  const auto horizon = cfg.at("horizon").get<std::size_t>();
  const auto n = cfg.at("particles").get<std::size_t>();
  const auto trials = cfg.at("trials").get<std::size_t>();
  const double k = cfg.at("tolerance").at("stderr_slack").get<double>();
  if (sizes.empty() || trials == 0) throw ConfigError("config: block_sizes and trials must be nonempty");
  std::sort(sizes.begin(), sizes.end());
  Setup s = setup_from_config(cfg, sizes.front());
  const LocalHMM& model = s.model;
  const Configuration x0(model.vertex_count(), 0);
  const ObservationPath obs = simulate(model, x0, horizon, derive_seed(master, SeedPurpose::kObservations)).observations;
  const DistributionTable filt = exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x0), obs).back();
  const VertexSet vertices = all_vertices(model.vertex_count());
  std::vector<DistributionTable> ref;
  for (Vertex v : vertices) ref.push_back(filt.marginal({v}));

  std::vector<Aggregate> totals;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const std::size_t b = sizes[si];
    const BlockPartition part = build_chain_blocks(model.graph(), b);
    const auto start = Clock::now();
    const FactorizedDistribution blockf =
        exact_block_filter(model, part, FactorizedDistribution::point_mass(part, model.state_sizes(), x0), obs).back();
    double bias = 0.0;
    for (Vertex v : vertices) bias += local_tv(ref[v], blockf.marginal({v}));
    bias /= static_cast<double>(vertices.size());
    const auto reports = particle_error_reports(
        FilterKind::kBlock, model, &part, x0, obs, n, trials, Stream(derive_seed(master, SeedPurpose::kFilter, si)),
        {horizon}, vertices, [&](std::size_t, std::size_t vi) -> const DistributionTable& { return ref[vi]; });
    const Aggregate total = mean_rmse(reports[0]);
    const double elapsed = seconds_since(start);
    const std::string lin = lineage(master, "filter/" + std::to_string(si));
    res.rows.push_back({res.scenario, params({{"block_size", str(b)}, {"N", str(n)}}), "bias", bias, 0.0, elapsed, lin});
    res.rows.push_back({res.scenario, params({{"block_size", str(b)}, {"N", str(n)}}), "total_error", total.value,
                        total.stderr_value, elapsed, lin});
    totals.push_back(total);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < totals.size(); ++i) {
    if (totals[i].value < totals[best].value) best = i;
  }
  res.rows.push_back({res.scenario, params({{"N", str(n)}}), "argmin_block_size", static_cast<double>(sizes[best]), 0.0, 0.0,
                      lineage(master, "filter")});
  bool u_shape = false;
  if (totals.size() >= 3) {
    for (std::size_t i = 1; i + 1 < totals.size(); ++i) {
      const bool below_small = totals[i].value <= totals.front().value - k * totals.front().stderr_value;
      const bool below_large = totals[i].value <= totals.back().value - k * totals.back().stderr_value;
      u_shape = u_shape || (below_small && below_large);
    }
  }
  res.rows.push_back({res.scenario, params({{"N", str(n)}}), "u_shape", u_shape ? 1.0 : 0.0, 0.0, 0.0, lineage(master, "filter")});
  if (!u_shape) res.flags.push_back("flat");
  return res;
}

// Exact distance between filters started from two point masses.
ScenarioResult scenario_filter_stability(const Json& cfg) {
  ScenarioResult res;
  res.scenario = "filter_stability";
  res.config = cfg;
  const auto master = cfg.at("seed").get<std::uint64_t>();
  const auto horizon = cfg.at("horizon").get<std::size_t>();
  const double threshold = cfg.at("tolerance").at("threshold").get<double>();
  Setup s = setup_from_config(cfg, 1);
  const LocalHMM& model = s.model;
  const Configuration x(model.vertex_count(), 0);
  Configuration x_alt(model.vertex_count());
  for (Vertex v = 0; v < x_alt.size(); ++v) x_alt[v] = static_cast<State>(model.state_size(v) - 1);
  const ObservationPath obs = simulate(model, x, horizon, derive_seed(master, SeedPurpose::kObservations)).observations;
  const auto start = Clock::now();
  const auto a = exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x), obs);
  const auto b = exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x_alt), obs);
  const double elapsed = seconds_since(start);
  const std::string lin = lineage(master, "observations");
  std::vector<double> dist(horizon + 1);
  for (std::size_t k = 0; k <= horizon; ++k) dist[k] = local_tv(a[k], b[k]);
  // Envelope: the largest distance at any later time.
  std::vector<double> envelope(dist);
  for (std::size_t k = horizon; k-- > 0;) envelope[k] = std::max(envelope[k], envelope[k + 1]);
  std::vector<double> ts;
  std::vector<double> logs;
  for (std::size_t k = 0; k <= horizon; ++k) {
    res.rows.push_back({res.scenario, params({{"n", str(k)}}), "distance", dist[k], 0.0, elapsed, lin});
    res.rows.push_back({res.scenario, params({{"n", str(k)}}), "envelope", envelope[k], 0.0, elapsed, lin});
    if (k > 0 && dist[k] > 1e-14) {
      ts.push_back(static_cast<double>(k));
      logs.push_back(std::log(dist[k]));
    }
  }
  const double rate = fitted_slope(ts, logs);
  res.rows.push_back({res.scenario, params({{"n", str(horizon)}}), "log_rate", rate, 0.0, elapsed, lin});
  res.rows.push_back({res.scenario, params({{"n", str(horizon)}}), "geometric_rate", std::exp(rate), 0.0, elapsed, lin});
  record(res, "decays_below_threshold", envelope[horizon] < threshold,
         "distance at n=" + std::to_string(horizon) + " is " + num(envelope[horizon]) + ", threshold " + num(threshold));
  if (x != x_alt && ts.size() >= 2) record(res, "negative_rate", rate < 0.0, "fitted log-rate " + num(rate));
  return res;
}

// Bootstrap weight degeneracy after one correction step on replicated
// product models of growing dimension.
ScenarioResult scenario_collapse(const Json& cfg) {
  ScenarioResult res;
  res.scenario = "collapse";
  res.config = cfg;
  const auto master = cfg.at("seed").get<std::uint64_t>();
  const auto copies = cfg.at("copies").get<std::vector<std::size_t>>();
  const auto n = cfg.at("particles").get<std::size_t>();
  const auto trials = cfg.at("trials").get<std::size_t>();
  const double k = cfg.at("tolerance").at("stderr_slack").get<double>();
  if (copies.empty() || trials == 0) throw ConfigError("config: copies and trials must be nonempty");
  Json base_cfg = cfg.at("model");
  const LocalHMM base = [&] {
    Json m = base_cfg;
    m["kind"] = "chain";
    return model_from_config(m, 1);
  }();
  std::vector<Aggregate> mw;
  for (std::size_t ci = 0; ci < copies.size(); ++ci) {
    const LocalHMM model = build_product_model(base, copies[ci]);
    const BlockPartition trivial = single_block(model.graph());
    const Configuration x0(model.vertex_count(), 0);
    std::vector<double> maxw(trials);
    std::vector<double> ess(trials);
    const auto start = Clock::now();
    parallel_for(trials, [&](std::size_t t) {
      const ObservationPath obs = simulate(model, x0, 1, derive_seed(master, SeedPurpose::kTrialObservations, t)).observations;
      const Stream stream = Stream(derive_seed(master, SeedPurpose::kFilter, ci)).child({static_cast<std::uint64_t>(Phase::kTrial), t});
      const ParticleEnsemble e = bootstrap_step(model, ParticleEnsemble::point_mass(FilterKind::kBootstrap, trivial, x0, n),
                                                obs.front(), stream);
      maxw[t] = max_weight(e.weights(0));
      ess[t] = effective_sample_size(e.weights(0));
    });
    const double elapsed = seconds_since(start);
    auto summarize = [&](const std::vector<double>& xs) {
      Aggregate a;
      a.value = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - a.value) * (x - a.value);
      a.stderr_value = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size())) : 0.0;
      return a;
    };
    const Aggregate m = summarize(maxw);
    const Aggregate e = summarize(ess);
    const std::string lin = lineage(master, "trial_observations+filter/" + std::to_string(ci));
    res.rows.push_back({res.scenario, params({{"d", str(copies[ci])}, {"N", str(n)}}), "mean_max_weight", m.value, m.stderr_value, elapsed, lin});
    res.rows.push_back({res.scenario, params({{"d", str(copies[ci])}, {"N", str(n)}}), "mean_ess", e.value, e.stderr_value, elapsed, lin});
    mw.push_back(m);
  }
  bool nondecreasing = true;
  for (std::size_t i = 1; i < mw.size(); ++i) {
    nondecreasing = nondecreasing && mw[i].value >= mw[i - 1].value - k * std::hypot(mw[i].stderr_value, mw[i - 1].stderr_value);
  }
  if (mw.size() >= 2) record(res, "max_weight_nondecreasing", nondecreasing, "mean max weight vs copies");
  return res;
}

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  };
  std::string out = "scenario,parameters,metric,value,stderr,seed_lineage\r\n";
  for (const auto& r : rows) {
    out += quote(r.scenario) + ',' + quote(r.parameters) + ',' + quote(r.metric) + ',' + num(r.value) + ',' +
           num(r.stderr_value) + ',' + quote(r.seed_lineage) + "\r\n";
  }
  return out;
}

Json scenario_metadata(const ScenarioResult& result) {
  Json assertions = Json::array();
  for (const auto& a : result.assertions) assertions.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  Json walls = Json::array();
  for (const auto& r : result.rows) walls.push_back(r.wall_time);
  return {{"scenario", result.scenario},
          {"config", result.config},
          {"master_seed", result.config.at("seed")},
          {"library_version", BLOCKPF_VERSION},
          {"assertions", assertions},
          {"flags", result.flags},
          {"all_passed", result.all_passed()},
          {"wall_time_seconds", result.wall_time},
          {"row_wall_times", walls}};
}

void write_scenario_outputs(const ScenarioResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / (result.scenario + ".csv"), rows_to_csv(result.rows));
  write_text_file(dir / (result.scenario + ".meta.json"), scenario_metadata(result).dump(2) + "\n");
}

}  // namespace blockpf
