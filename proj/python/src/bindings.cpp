#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "blockpf/dobrushin.hpp"
#include "blockpf/errors.hpp"
#include "blockpf/exact.hpp"
#include "blockpf/experiments.hpp"
#include "blockpf/io.hpp"
#include "blockpf/metrics.hpp"
#include "blockpf/parallel.hpp"
#include "blockpf/particle.hpp"

namespace py = pybind11;
using namespace blockpf;

namespace {

Json to_json(const py::object& obj) {
  if (obj.is_none()) return Json::object();
  const auto dumps = py::module_::import("json").attr("dumps");
  return Json::parse(py::str(dumps(obj)).cast<std::string>());
}

py::object from_json(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<std::vector<double>> vertex_marginals(const DistributionTable& t) {
  std::vector<std::vector<double>> out;
  for (Vertex v = 0; v < t.radices().size(); ++v) out.push_back(t.marginal({v}).probs());
  return out;
}

std::vector<std::vector<double>> vertex_marginals(const FactorizedDistribution& f, std::size_t n) {
  std::vector<std::vector<double>> out;
  for (Vertex v = 0; v < n; ++v) out.push_back(f.marginal({v}).probs());
  return out;
}

}  // namespace

PYBIND11_MODULE(_blockpf, m) {
  m.doc() = "Block particle filters for locally interacting hidden Markov models";
  m.attr("__version__") = BLOCKPF_VERSION;

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<SizeError>(m, "SizeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConditionFailed>(m, "ConditionFailed", base.ptr());

  py::class_<SpatialGraph>(m, "SpatialGraph")
      .def(py::init<std::size_t, std::vector<std::pair<Vertex, Vertex>>, int>(), py::arg("vertex_count"),
           py::arg("edges"), py::arg("r"))
      .def_property_readonly("vertex_count", &SpatialGraph::vertex_count)
      .def_property_readonly("radius", &SpatialGraph::radius)
      .def_property_readonly("max_neighborhood", &SpatialGraph::max_neighborhood)
      .def("distance", py::overload_cast<Vertex, Vertex>(&SpatialGraph::distance, py::const_))
      .def("neighborhood", &SpatialGraph::neighborhood);
  m.def("build_lattice", &build_lattice, py::arg("q"), py::arg("d"), py::arg("r"));
  m.def("build_chain", &build_chain, py::arg("n"), py::arg("r") = 1);
  m.def("build_edgeless", &build_edgeless, py::arg("n"), py::arg("r") = 0);

  py::class_<BlockPartition>(m, "BlockPartition")
      .def(py::init<const SpatialGraph&, std::vector<VertexSet>, bool>(), py::arg("graph"), py::arg("blocks"),
           py::arg("ragged") = false)
      .def_property_readonly("blocks", &BlockPartition::blocks)
      .def_property_readonly("max_block_size", &BlockPartition::max_block_size)
      .def_property_readonly("max_block_neighbors", &BlockPartition::max_block_neighbors)
      .def("inner_boundary", &BlockPartition::inner_boundary);
  m.def("build_block_cover", &build_block_cover, py::arg("graph"), py::arg("q"), py::arg("d"), py::arg("b"));
  m.def("build_chain_blocks", &build_chain_blocks, py::arg("graph"), py::arg("size"));
  m.def("single_block", &single_block, py::arg("graph"));
  m.def("singleton_blocks", &singleton_blocks, py::arg("graph"));

  py::class_<LocalHMM>(m, "LocalHMM")
      .def(py::init([](const SpatialGraph& g, std::vector<std::size_t> xs, std::vector<std::size_t> ys,
                       std::vector<std::vector<double>> trans, std::vector<std::vector<double>> obs, bool allow_zero) {
             return LocalHMM(g, std::move(xs), std::move(ys), std::move(trans), std::move(obs),
                             allow_zero ? Positivity::kAllowZero : Positivity::kStrict);
           }),
           py::arg("graph"), py::arg("state_sizes"), py::arg("obs_sizes"), py::arg("trans"), py::arg("obs"),
           py::arg("allow_zero") = false)
      .def_property_readonly("graph", &LocalHMM::graph)
      .def_property_readonly("vertex_count", &LocalHMM::vertex_count)
      .def_property_readonly("state_sizes", &LocalHMM::state_sizes)
      .def_property_readonly("obs_sizes", &LocalHMM::obs_sizes)
      .def("trans_table", &LocalHMM::trans_table)
      .def("obs_table", &LocalHMM::obs_table)
      .def("to_json", [](const LocalHMM& model) { return from_json(model_to_json(model)); });

  m.def(
      "random_local_hmm",
      [](const SpatialGraph& g, std::size_t state_size, std::size_t obs_size, double mixing, double obs_mixing,
         bool homogeneous, std::uint64_t seed) {
        return random_local_hmm(g, {state_size, obs_size, mixing, obs_mixing, homogeneous}, seed);
      },
      py::arg("graph"), py::arg("state_size") = 2, py::arg("obs_size") = 2, py::arg("mixing") = 0.6,
      py::arg("obs_mixing") = 0.3, py::arg("homogeneous") = false, py::arg("seed") = 1);
  m.def("build_product_model", &build_product_model, py::arg("base"), py::arg("copies"));
  m.def(
      "load_model",
      [](const std::filesystem::path& path) {
        ModelDocument doc = load_model(path);
        return py::make_tuple(std::move(doc.model), doc.partition ? py::cast(*doc.partition) : py::none());
      },
      py::arg("path"));
  m.def(
      "parse_model",
      [](const py::object& doc) {
        ModelDocument d = parse_model(to_json(doc));
        return py::make_tuple(std::move(d.model), d.partition ? py::cast(*d.partition) : py::none());
      },
      py::arg("document"));

  m.def(
      "simulate",
      [](const LocalHMM& model, const Configuration& initial, std::size_t n, std::uint64_t seed) {
        const Trajectory t = simulate(model, initial, n, seed);
        return py::make_tuple(t.states, t.observations);
      },
      py::arg("model"), py::arg("initial"), py::arg("n"), py::arg("seed"));

  m.def(
      "exact_filter",
      [](const LocalHMM& model, const Configuration& x0, const ObservationPath& obs) {
        const auto f = exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x0), obs);
        std::vector<std::vector<double>> out;
        for (const auto& t : f) out.push_back(t.probs());
        return out;
      },
      py::arg("model"), py::arg("initial"), py::arg("observations"),
      "Joint filtering tables (row-major, first vertex most significant) for k = 0..n.");
  m.def(
      "exact_filter_marginals",
      [](const LocalHMM& model, const Configuration& x0, const ObservationPath& obs) {
        return vertex_marginals(exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x0), obs).back());
      },
      py::arg("model"), py::arg("initial"), py::arg("observations"));
  m.def(
      "exact_block_filter_marginals",
      [](const LocalHMM& model, const BlockPartition& part, const Configuration& x0, const ObservationPath& obs) {
        const auto f =
            exact_block_filter(model, part, FactorizedDistribution::point_mass(part, model.state_sizes(), x0), obs);
        return vertex_marginals(f.back(), model.vertex_count());
      },
      py::arg("model"), py::arg("partition"), py::arg("initial"), py::arg("observations"));
  m.def(
      "path_posterior",
      [](const LocalHMM& model, const Configuration& x0, const ObservationPath& obs) {
        return path_posterior_oracle(model, DistributionTable::point_mass(model.state_sizes(), x0), obs).probs();
      },
      py::arg("model"), py::arg("initial"), py::arg("observations"));

  m.def(
      "particle_filter_marginals",
      [](const LocalHMM& model, const BlockPartition* part, const Configuration& x0, const ObservationPath& obs,
         std::size_t n, std::uint64_t seed, const std::string& kind, bool systematic) {
        if (kind != "block" && kind != "bootstrap") throw UsageError("kind must be 'block' or 'bootstrap'");
        StepOptions opts;
        if (systematic) opts.resampling = Resampling::kSystematic;
        const BlockPartition whole = single_block(model.graph());
        const BlockPartition* p = part ? part : &whole;
        std::vector<std::vector<double>> out;
        py::gil_scoped_release release;
        run_filter(kind == "block" ? FilterKind::kBlock : FilterKind::kBootstrap, model, p, x0, obs, n, Stream(seed),
                   [&](std::size_t k, const ParticleEnsemble& e) {
                     if (k == obs.size()) {
                       for (Vertex v = 0; v < model.vertex_count(); ++v) {
                         out.push_back(ensemble_marginal(e, {v}, model.state_sizes()).probs());
                       }
                     }
                   },
                   opts);
        return out;
      },
      py::arg("model"), py::arg("partition"), py::arg("initial"), py::arg("observations"), py::arg("particles"),
      py::arg("seed"), py::arg("kind") = "block", py::arg("systematic") = false);

  m.def(
      "local_tv", [](const std::vector<double>& p, const std::vector<double>& q) { return local_tv(p, q); },
      py::arg("p"), py::arg("q"));
  m.def("tnorm_exact", &tnorm_exact, py::arg("trial_deltas"));
  m.def("tnorm_upper", &tnorm_upper, py::arg("trial_deltas"));
  m.def("effective_sample_size", [](const std::vector<double>& w) { return effective_sample_size(w); });
  m.def("max_weight", [](const std::vector<double>& w) { return max_weight(w); });

  py::class_<FiniteMRF>(m, "FiniteMRF")
      .def(py::init<std::vector<std::size_t>, std::vector<double>>(), py::arg("alphabets"), py::arg("density"))
      .def_property_readonly("site_count", &FiniteMRF::site_count);
  m.def("dobrushin_coefficients", &dobrushin_coefficients);
  m.def("perturbation_vector", &perturbation_vector);
  m.def(
      "comparison_bound",
      [](const FiniteMRF& rho, const FiniteMRF& tilde, const std::vector<std::size_t>& j) {
        return comparison_bound(make_certificate(rho, tilde), j);
      },
      py::arg("rho"), py::arg("rho_tilde"), py::arg("sites"));
  m.def("exact_local_distance", &exact_local_distance, py::arg("rho"), py::arg("rho_tilde"), py::arg("sites"));

  m.def("scenario_ids", &scenario_ids);
  m.def(
      "default_config", [](const std::string& id) { return from_json(default_config(id)); }, py::arg("scenario"));
  m.def(
      "run_scenario",
      [](const std::string& id, const py::object& config, const std::vector<std::string>& overrides) {
        const Json cfg = resolve_config(id, to_json(config), overrides);
        ScenarioResult res;
        {
          py::gil_scoped_release release;
          res = run_scenario(cfg);
        }
        py::list rows;
        for (const auto& r : res.rows) {
          py::dict d;
          d["scenario"] = r.scenario;
          d["parameters"] = r.parameters;
          d["metric"] = r.metric;
          d["value"] = r.value;
          d["stderr"] = r.stderr_value;
          d["seed_lineage"] = r.seed_lineage;
          rows.append(d);
        }
        py::dict out;
        out["rows"] = rows;
        out["csv"] = rows_to_csv(res.rows);
        out["metadata"] = from_json(scenario_metadata(res));
        return out;
      },
      py::arg("scenario"), py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{});
  m.def("set_thread_count", &set_thread_count, py::arg("n"));
}
