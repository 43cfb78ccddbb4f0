#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "blockpf/exact.hpp"
#include "blockpf/graph.hpp"
#include "blockpf/model.hpp"
#include "blockpf/rng.hpp"

namespace blockpf {

enum class FilterKind { kBootstrap, kBlock };
enum class Resampling { kMultinomial, kSystematic };

// N particle configurations with one normalized weight vector per block. The
// represented measure is the tensor product over blocks K of
// sum_i w^K(i) delta_{x^K(i)}; bootstrap mode is the single block {V}.
class ParticleEnsemble {
 public:
  ParticleEnsemble(FilterKind mode, std::size_t vertex_count, std::vector<VertexSet> blocks,
                   std::vector<State> states, std::vector<std::vector<double>> block_weights);

  // N copies of x with uniform weights.
  static ParticleEnsemble point_mass(FilterKind mode, const BlockPartition& partition,
                                     std::span<const State> x, std::size_t n);

  FilterKind mode() const { return mode_; }
  std::size_t size() const { return n_; }
  std::size_t vertex_count() const { return nv_; }
  std::span<const State> particle(std::size_t i) const { return {states_.data() + i * nv_, nv_}; }
  const std::vector<State>& states() const { return states_; }
  const std::vector<VertexSet>& blocks() const { return blocks_; }
  std::size_t block_of(Vertex v) const { return block_of_[v]; }
  const std::vector<double>& weights(std::size_t block) const { return weights_[block]; }
  const std::vector<std::vector<double>>& block_weights() const { return weights_; }

 private:
  FilterKind mode_;
  std::size_t n_;
  std::size_t nv_;
  std::vector<VertexSet> blocks_;
  std::vector<std::size_t> block_of_;
  std::vector<State> states_;
  std::vector<std::vector<double>> weights_;
};

// S^N: N i.i.d. draws with uniform weights (bootstrap-mode result). Particle i
// uses substream i of `stream`.
ParticleEnsemble sample_operator(const DistributionTable& dist, std::size_t n, const Stream& stream);
// Draws from the product measure an ensemble represents (independent block
// indices per block, block K using stream.child(K)).
ParticleEnsemble sample_operator(const ParticleEnsemble& ens, std::size_t n, const Stream& stream);

struct StepOptions {
  Resampling resampling = Resampling::kMultinomial;
};

// C S^N P on a bootstrap-mode ensemble. `step` is the stream of this time
// step; phases use step.child({phase, 0}).
ParticleEnsemble bootstrap_step(const LocalHMM& model, const ParticleEnsemble& ens,
                                std::span<const int> y, const Stream& step,
                                const StepOptions& options = {});

// C B S^N P on a block-mode ensemble; block K resamples from
// step.child({resample, K}) and propagates from step.child({propagate, K}).
ParticleEnsemble block_pf_step(const LocalHMM& model, const BlockPartition& partition,
                               const ParticleEnsemble& ens, std::span<const int> y,
                               const Stream& step, const StepOptions& options = {});

// Runs the filter from delta_x; observer(k, ensemble) is called for k = 0..n.
void run_filter(FilterKind kind, const LocalHMM& model, const BlockPartition* partition,
                std::span<const State> initial, const ObservationPath& observations,
                std::size_t n_particles, const Stream& stream,
                const std::function<void(std::size_t, const ParticleEnsemble&)>& observer,
                const StepOptions& options = {});

std::vector<ParticleEnsemble> run_filter(FilterKind kind, const LocalHMM& model,
                                         const BlockPartition* partition,
                                         std::span<const State> initial,
                                         const ObservationPath& observations,
                                         std::size_t n_particles, const Stream& stream,
                                         const StepOptions& options = {});

// Weighted empirical marginal on J (ascending). J must sit inside one block
// unless allow_product is set, in which case per-block marginals are
// multiplied as the tensor structure prescribes.
DistributionTable ensemble_marginal(const ParticleEnsemble& ens, const VertexSet& j,
                                    std::span<const std::size_t> state_sizes,
                                    bool allow_product = false);

double effective_sample_size(std::span<const double> weights);
double max_weight(std::span<const double> weights);

}  // namespace blockpf
