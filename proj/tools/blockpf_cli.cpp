#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "blockpf/dobrushin.hpp"
#include "blockpf/errors.hpp"
#include "blockpf/exact.hpp"
#include "blockpf/experiments.hpp"
#include "blockpf/io.hpp"
#include "blockpf/parallel.hpp"
#include "blockpf/particle.hpp"

namespace {

using namespace blockpf;

enum ExitCode : int { kOk = 0, kInternal = 1, kUserError = 2, kAssertionFailed = 3 };

struct Common {
  int threads = 0;
  bool verbose = false;
};

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
  }
}

BlockPartition partition_for(const ModelDocument& doc, std::size_t block_size) {
  if (block_size > 0) return build_chain_blocks(doc.model.graph(), block_size);
  if (doc.partition) return *doc.partition;
  throw UsageError("the model file has no partition; pass --block-size");
}

Configuration initial_state(const LocalHMM& model, const std::vector<int>& given) {
  if (given.empty()) return Configuration(model.vertex_count(), 0);
  Configuration x(given.begin(), given.end());
  model.check_configuration(x);
  return x;
}

int cmd_simulate(const std::string& model_path, std::size_t steps, std::uint64_t seed,
                 const std::vector<int>& initial, const std::string& out) {
  const ModelDocument doc = load_model(model_path);
  const Trajectory traj = simulate(doc.model, initial_state(doc.model, initial), steps, seed);
  Json j = trajectory_to_json(traj);
  j["seed"] = seed;
  emit(out, j.dump(2) + "\n");
  return kOk;
}

int cmd_filter(const std::string& model_path, const std::string& obs_path, const std::string& kind,
               std::size_t particles, std::size_t block_size, std::uint64_t seed,
               const std::vector<int>& initial, bool systematic, const std::string& out,
               const std::string& ensemble_out) {
  const ModelDocument doc = load_model(model_path);
  const LocalHMM& model = doc.model;
  const Trajectory traj = trajectory_from_json(read_json_file(obs_path));
  for (const auto& y : traj.observations) model.check_observation(y);
  const Configuration x0 = initial_state(model, initial);
  Json result = {{"kind", kind}, {"steps", traj.observations.size()}};
  Json marginals = Json::array();
  auto push_marginals = [&](auto&& marginal_of) {
    for (Vertex v = 0; v < model.vertex_count(); ++v) marginals.push_back(marginal_of(v).probs());
  };
  if (kind == "exact") {
    const auto filt = exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x0), traj.observations);
    push_marginals([&](Vertex v) { return filt.back().marginal({v}); });
  } else if (kind == "exact_block") {
    const BlockPartition part = partition_for(doc, block_size);
    const auto filt = exact_block_filter(model, part, FactorizedDistribution::point_mass(part, model.state_sizes(), x0),
                                         traj.observations);
    push_marginals([&](Vertex v) { return filt.back().marginal({v}); });
  } else if (kind == "bootstrap" || kind == "block") {
    if (particles == 0) throw UsageError("--particles must be positive");
    const bool block = kind == "block";
    const BlockPartition part = block ? partition_for(doc, block_size) : single_block(model.graph());
    StepOptions opts;
    if (systematic) opts.resampling = Resampling::kSystematic;
    const auto ens = run_filter(block ? FilterKind::kBlock : FilterKind::kBootstrap, model, &part, x0,
                                traj.observations, particles, Stream(seed), opts);
    push_marginals([&](Vertex v) { return ensemble_marginal(ens.back(), {v}, model.state_sizes()); });
    result["particles"] = particles;
    result["seed"] = seed;
    if (!ensemble_out.empty()) {
      std::ofstream f(ensemble_out, std::ios::binary);
      if (!f) throw UsageError("cannot open " + ensemble_out + " for writing");
      write_ensemble(f, ens.back(), model.state_sizes());
    }
  } else {
    throw UsageError("unknown filter kind '" + kind + "' (exact, exact_block, bootstrap, block)");
  }
  result["marginals"] = marginals;
  emit(out, result.dump(2) + "\n");
  return kOk;
}

int cmd_experiment(const std::string& scenario, const std::string& config_path, const std::string& out_dir,
                   std::optional<std::uint64_t> seed, const std::vector<std::string>& overrides, bool dry_run,
                   bool verbose) {
  Json user = config_path.empty() ? Json::object() : read_json_file(config_path);
  std::string id = scenario;
  if (id.empty()) {
    if (!user.contains("scenario")) throw UsageError("no scenario given on the command line or in the config");
    id = user.at("scenario").get<std::string>();
  }
  std::vector<std::string> ids;
  if (id == "all") {
    ids = scenario_ids();
    if (user.contains("scenario")) throw UsageError("'all' cannot be combined with a config naming a scenario");
  } else {
    ids.push_back(canonical_scenario_id(id));
  }
  bool all_ok = true;
  for (const auto& sid : ids) {
    Json cfg = resolve_config(sid, user, overrides);
    if (seed) cfg["seed"] = *seed;
    if (dry_run) {
      std::cout << cfg.dump(2) << "\n";
      continue;
    }
    const ScenarioResult res = run_scenario(cfg);
    if (out_dir.empty()) {
      std::cout << rows_to_csv(res.rows);
    } else {
      write_scenario_outputs(res, out_dir);
    }
    for (const auto& a : res.assertions) {
      if (verbose || !a.passed) {
        std::cerr << sid << ": " << (a.passed ? "PASS " : "FAIL ") << a.name << " (" << a.detail << ")\n";
      }
    }
    for (const auto& f : res.flags) std::cerr << sid << ": flag " << f << "\n";
    all_ok = all_ok && res.all_passed();
  }
  return all_ok ? kOk : kAssertionFailed;
}

// Fast self-checks against brute-force references.
int cmd_validate(const std::string& model_path, std::size_t steps, std::uint64_t seed, bool verbose) {
  struct Check {
    std::string name;
    bool passed;
    std::string detail;
  };
  std::vector<Check> checks;
  auto add = [&](std::string name, double err, double tol) {
    checks.push_back({std::move(name), err < tol, "err=" + std::to_string(err)});
  };
  std::vector<std::pair<std::string, LocalHMM>> models;
  if (!model_path.empty()) {
    models.emplace_back(model_path, load_model(model_path).model);
  } else {
    for (std::uint64_t s = 0; s < 3; ++s) {
      models.emplace_back("random_chain_" + std::to_string(s), random_local_hmm(build_chain(3, 1), {}, seed + s));
    }
  }
  for (const auto& [name, model] : models) {
    const Configuration x0(model.vertex_count(), 0);
    const auto traj = simulate(model, x0, steps, seed);
    const DistributionTable init = DistributionTable::point_mass(model.state_sizes(), x0);
    const auto filt = exact_filter(model, init, traj.observations);
    double path_err = 0.0;
    try {
      const DistributionTable ref = path_posterior_oracle(model, init, traj.observations);
      path_err = local_tv(filt.back(), ref);
      add(name + ": filter_vs_path_posterior", path_err, 1e-10);
    } catch (const SizeError&) {
      checks.push_back({name + ": filter_vs_path_posterior", true, "skipped, path space too large"});
    }
    const BlockPartition whole = single_block(model.graph());
    const auto bf = exact_block_filter(model, whole, FactorizedDistribution::point_mass(whole, model.state_sizes(), x0),
                                       traj.observations);
    add(name + ": single_block_equals_filter", local_tv(filt.back(), bf.back().joint()), 1e-12);
    const auto boot = run_filter(FilterKind::kBootstrap, model, &whole, x0, traj.observations, 64, Stream(seed));
    const auto blk = run_filter(FilterKind::kBlock, model, &whole, x0, traj.observations, 64, Stream(seed));
    const bool same = boot.back().states() == blk.back().states() &&
                      boot.back().block_weights() == blk.back().block_weights();
    checks.push_back({name + ": block_pf_single_block_is_bootstrap", same, same ? "identical" : "differs"});
  }
  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.passed;
    if (verbose || !c.passed) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
  }
  std::cout << (ok ? "validate: ok" : "validate: FAILED") << "\n";
  return ok ? kOk : kAssertionFailed;
}

int cmd_dobrushin(const std::string& rho_path, const std::string& tilde_path, const std::vector<std::size_t>& j,
                  bool exact, const std::string& out) {
  const FiniteMRF rho = mrf_from_json(read_json_file(rho_path));
  const FiniteMRF tilde = mrf_from_json(read_json_file(tilde_path));
  const ComparisonCertificate cert = make_certificate(rho, tilde);
  std::optional<std::vector<std::size_t>> jj;
  if (!j.empty()) jj = j;
  Json doc = certificate_to_json(cert, jj);
  if (exact && jj) doc["exact_local_distance"] = exact_local_distance(rho, tilde, *jj);
  emit(out, doc.dump(2) + "\n");
  return cert.d ? kOk : kAssertionFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block particle filters for locally interacting hidden Markov models"};
  app.set_version_flag("--version", std::string(BLOCKPF_VERSION));
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (overrides BLOCKPF_THREADS)")->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", common.verbose, "Print per-check lines");

  std::string model_path;
  std::string out;
  std::uint64_t seed = 1;
  std::vector<int> initial;

  auto* sim = app.add_subcommand("simulate", "Simulate a trajectory from a model file");
  std::size_t steps = 10;
  sim->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("-n,--steps", steps, "Number of time steps");
  sim->add_option("--seed", seed, "Seed");
  sim->add_option("--initial", initial, "Initial configuration (default all zeros)");
  sim->add_option("-o,--out", out, "Output JSON path (default stdout)");

  auto* filt = app.add_subcommand("filter", "Run a filter on an observation file");
  std::string obs_path;
  std::string kind = "block";
  std::size_t particles = 1000;
  std::size_t block_size = 0;
  bool systematic = false;
  std::string ensemble_out;
  filt->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  filt->add_option("--observations", obs_path, "Trajectory JSON from simulate")->required()->check(CLI::ExistingFile);
  filt->add_option("--kind", kind, "exact | exact_block | bootstrap | block");
  filt->add_option("-N,--particles", particles, "Particle count");
  filt->add_option("--block-size", block_size, "Chain block size (overrides the model's partition)");
  filt->add_option("--seed", seed, "Seed");
  filt->add_option("--initial", initial, "Initial configuration (default all zeros)");
  filt->add_flag("--systematic", systematic, "Systematic instead of multinomial resampling");
  filt->add_option("-o,--out", out, "Output JSON path (default stdout)");
  filt->add_option("--ensemble-out", ensemble_out, "Write the final ensemble in binary form");

  auto* exp = app.add_subcommand("experiment", "Run an experiment scenario ('all' runs every one)");
  std::string scenario;
  std::string config_path;
  std::optional<std::uint64_t> exp_seed;
  std::vector<std::string> overrides;
  bool dry_run = false;
  exp->add_option("scenario", scenario, "Scenario id or 'all'");
  exp->add_option("--config", config_path, "Config JSON")->check(CLI::ExistingFile);
  exp->add_option("-o,--out", out, "Output directory for <scenario>.csv and <scenario>.meta.json");
  exp->add_option("--seed", exp_seed, "Master seed override");
  exp->add_option("--set", overrides, "Override a config key, e.g. --set tolerance.max_ratio=3");
  exp->add_flag("--dry-run", dry_run, "Print the resolved config and exit");

  auto* val = app.add_subcommand("validate", "Check the filters against brute-force references");
  std::size_t val_steps = 4;
  val->add_option("--model", model_path, "Model JSON (default: random small chains)")->check(CLI::ExistingFile);
  val->add_option("-n,--steps", val_steps, "Number of time steps");
  val->add_option("--seed", seed, "Seed");

  auto* dob = app.add_subcommand("dobrushin", "Comparison certificate for two random fields");
  std::string rho_path;
  std::string tilde_path;
  std::vector<std::size_t> sites;
  bool with_exact = false;
  dob->add_option("--rho", rho_path, "Field JSON")->required()->check(CLI::ExistingFile);
  dob->add_option("--rho-tilde", tilde_path, "Perturbed field JSON")->required()->check(CLI::ExistingFile);
  dob->add_option("-J,--sites", sites, "Sites for the local bound");
  dob->add_flag("--exact", with_exact, "Also compute the exact local distance");
  dob->add_option("-o,--out", out, "Output JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUserError;
  }

  try {
    if (common.threads > 0) set_thread_count(static_cast<std::size_t>(common.threads));
    if (*sim) return cmd_simulate(model_path, steps, seed, initial, out);
    if (*filt) return cmd_filter(model_path, obs_path, kind, particles, block_size, seed, initial, systematic, out, ensemble_out);
    if (*exp) return cmd_experiment(scenario, config_path, out, exp_seed, overrides, dry_run, common.verbose);
    if (*val) return cmd_validate(model_path, val_steps, seed, common.verbose);
    if (*dob) return cmd_dobrushin(rho_path, tilde_path, sites, with_exact, out);
  } catch (const ConditionFailed& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAssertionFailed;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
