#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "blockpf/graph.hpp"
#include "blockpf/rng.hpp"

namespace blockpf {

using State = int;
using Configuration = std::vector<State>;   // one local state per vertex
using Observation = std::vector<int>;       // one local observation per vertex
using ObservationPath = std::vector<Observation>;  // entry k-1 is Y_k

enum class Positivity { kStrict, kAllowZero };

// Locally interacting hidden Markov model on a finite product space.
//
// trans[v] is a row-major table with one row per configuration of N(v)
// (vertices ascending, first vertex most significant) and |X^v| columns.
// obs[v] is |X^v| x |Y^v|, row-major. Rows are probability vectors.
class LocalHMM {
 public:
  LocalHMM(SpatialGraph graph, std::vector<std::size_t> state_sizes,
           std::vector<std::size_t> obs_sizes, std::vector<std::vector<double>> trans,
           std::vector<std::vector<double>> obs, Positivity positivity = Positivity::kStrict);

  const SpatialGraph& graph() const { return graph_; }
  std::size_t vertex_count() const { return graph_.vertex_count(); }
  std::size_t state_size(Vertex v) const { return state_sizes_[v]; }
  std::size_t obs_size(Vertex v) const { return obs_sizes_[v]; }
  const std::vector<std::size_t>& state_sizes() const { return state_sizes_; }
  const std::vector<std::size_t>& obs_sizes() const { return obs_sizes_; }

  std::size_t trans_rows(Vertex v) const { return trans_[v].size() / state_sizes_[v]; }
  const std::vector<double>& trans_table(Vertex v) const { return trans_[v]; }
  const std::vector<double>& obs_table(Vertex v) const { return obs_[v]; }

  // Row of p^v selected by the N(v)-restriction of x.
  std::size_t trans_row_index(Vertex v, std::span<const State> x) const {
    std::size_t row = 0;
    for (const auto& [w, stride] : row_strides_[v]) row += static_cast<std::size_t>(x[w]) * stride;
    return row;
  }
  std::span<const double> trans_row(Vertex v, std::size_t row) const {
    return {trans_[v].data() + row * state_sizes_[v], state_sizes_[v]};
  }
  double trans(Vertex v, std::span<const State> x, State z) const {
    return trans_[v][trans_row_index(v, x) * state_sizes_[v] + static_cast<std::size_t>(z)];
  }
  double obs(Vertex v, State x, int y) const {
    return obs_[v][static_cast<std::size_t>(x) * obs_sizes_[v] + static_cast<std::size_t>(y)];
  }
  double log_obs(Vertex v, State x, int y) const {
    return log_obs_[v][static_cast<std::size_t>(x) * obs_sizes_[v] + static_cast<std::size_t>(y)];
  }
  // (vertex, stride) pairs used to encode the N(v)-restriction as a row index.
  const std::vector<std::pair<Vertex, std::size_t>>& row_strides(Vertex v) const {
    return row_strides_[v];
  }

  std::pair<double, double> eps_bounds() const { return eps_; }
  std::pair<double, double> kappa_bounds() const { return kappa_; }

  void check_configuration(std::span<const State> x) const;
  void check_observation(std::span<const int> y) const;

 private:
  SpatialGraph graph_;
  std::vector<std::size_t> state_sizes_;
  std::vector<std::size_t> obs_sizes_;
  std::vector<std::vector<double>> trans_;
  std::vector<std::vector<double>> obs_;
  std::vector<std::vector<double>> log_obs_;
  std::vector<std::vector<std::pair<Vertex, std::size_t>>> row_strides_;
  std::pair<double, double> eps_;
  std::pair<double, double> kappa_;
};

// d independent copies of a single-vertex model on an edgeless graph.
LocalHMM build_product_model(const LocalHMM& base, std::size_t copies);

struct RandomModelOptions {
  std::size_t state_size = 2;
  std::size_t obs_size = 2;
  // Transition rows are lambda * uniform + (1 - lambda) * Dirichlet(1) draw.
  double mixing = 0.6;
  // Same construction for observation rows.
  double obs_mixing = 0.3;
  // Chains only: every vertex uses one kernel keyed by the offset pattern
  // x^{v-r..v+r}, with state 0 substituted beyond the ends.
  bool homogeneous = false;
};

LocalHMM random_local_hmm(const SpatialGraph& graph, const RandomModelOptions& options,
                          std::uint64_t seed);

struct Trajectory {
  std::vector<Configuration> states;  // X_0 .. X_n
  ObservationPath observations;       // Y_1 .. Y_n
};

// Vertex v at time k draws from substream v of stream (seed; simulate, k):
// draw 0 for X_k^v, draw 1 for Y_k^v.
Trajectory simulate(const LocalHMM& model, const Configuration& initial, std::size_t n,
                    std::uint64_t seed);

}  // namespace blockpf
