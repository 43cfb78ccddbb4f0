#include "blockpf/particle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "blockpf/errors.hpp"

namespace blockpf {

namespace {

constexpr double kWeightTolerance = 1e-12;

std::uint64_t tag(Phase p) { return static_cast<std::uint64_t>(p); }

// Normalizes log-weights in place into linear weights (max-shifted).
void normalize_log_weights(std::vector<double>& w) {
  const double top = *std::max_element(w.begin(), w.end());
  if (!std::isfinite(top)) throw NumericError("particle weights: all log-weights are -inf");
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : w) x /= total;
}

class IndexSampler {
 public:
  IndexSampler(std::span<const double> weights, Resampling scheme, const Stream& stream)
      : cumulative_(weights.size()), scheme_(scheme), stream_(stream) {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      cumulative_[i] = acc;
    }
    if (scheme_ == Resampling::kSystematic) offset_ = stream_.substream(0).uniform();
  }

  std::size_t draw(std::size_t i, std::size_t n) const {
    double u = scheme_ == Resampling::kMultinomial
                   ? stream_.substream(static_cast<std::uint32_t>(i)).uniform()
                   : (offset_ + static_cast<double>(i)) / static_cast<double>(n);
    u *= cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto idx = static_cast<std::size_t>(it - cumulative_.begin());
    return std::min(idx, cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
  Resampling scheme_;
  Stream stream_;
  double offset_ = 0.0;
};

void propagate_block(const LocalHMM& model, const VertexSet& block, std::span<const State> source,
                     std::span<State> target, CounterRng& rng) {
  for (Vertex v : block) {
    target[v] = static_cast<State>(rng.categorical(model.trans_row(v, model.trans_row_index(v, source))));
  }
}

void check_ensemble(const LocalHMM& model, const ParticleEnsemble& ens) {
  if (ens.vertex_count() != model.vertex_count()) throw UsageError("ensemble does not match model");
}

}  // namespace

ParticleEnsemble::ParticleEnsemble(FilterKind mode, std::size_t vertex_count,
                                   std::vector<VertexSet> blocks, std::vector<State> states,
                                   std::vector<std::vector<double>> block_weights)
    : mode_(mode),
      n_(vertex_count == 0 ? 0 : states.size() / vertex_count),
      nv_(vertex_count),
      blocks_(std::move(blocks)),
      states_(std::move(states)),
      weights_(std::move(block_weights)) {
  if (nv_ == 0 || n_ == 0 || states_.size() != n_ * nv_) {
    throw UsageError("ensemble: need N >= 1 particles of " + std::to_string(nv_) + " vertices");
  }
  if (mode_ == FilterKind::kBootstrap && blocks_.size() != 1) {
    throw UsageError("ensemble: bootstrap mode uses the single block {V}");
  }
  if (weights_.size() != blocks_.size()) throw UsageError("ensemble: one weight vector per block");
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  block_of_.assign(nv_, kNone);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    for (Vertex v : blocks_[k]) {
      if (v >= nv_ || block_of_[v] != kNone) throw UsageError("ensemble: blocks do not partition V");
      block_of_[v] = k;
    }
    const auto& w = weights_[k];
    if (w.size() != n_) throw ValidationError("ensemble: weight vector length differs from N");
    double total = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) throw ValidationError("ensemble: negative weight");
      total += x;
    }
    // Summation error grows with N.
    const double tol = kWeightTolerance + 4.0 * static_cast<double>(n_) * std::numeric_limits<double>::epsilon();
    if (std::abs(total - 1.0) > tol) throw ValidationError("ensemble: weights not normalized");
  }
  if (std::find(block_of_.begin(), block_of_.end(), kNone) != block_of_.end()) {
    throw UsageError("ensemble: blocks do not cover V");
  }
}

ParticleEnsemble ParticleEnsemble::point_mass(FilterKind mode, const BlockPartition& partition,
                                              std::span<const State> x, std::size_t n) {
  if (n == 0) throw UsageError("ensemble: N must be >= 1");
  std::vector<State> states;
  states.reserve(n * x.size());
  for (std::size_t i = 0; i < n; ++i) states.insert(states.end(), x.begin(), x.end());
  std::vector<VertexSet> blocks;
  if (mode == FilterKind::kBootstrap) {
    VertexSet all(x.size());
    for (Vertex v = 0; v < all.size(); ++v) all[v] = v;
    blocks.push_back(std::move(all));
  } else {
    blocks = partition.blocks();
  }
  std::vector<std::vector<double>> weights(blocks.size(),
                                           std::vector<double>(n, 1.0 / static_cast<double>(n)));
  return ParticleEnsemble(mode, x.size(), std::move(blocks), std::move(states), std::move(weights));
}

ParticleEnsemble sample_operator(const DistributionTable& dist, std::size_t n, const Stream& stream) {
  if (n == 0) throw UsageError("sample operator: N must be >= 1");
  const std::size_t nv = dist.radices().size();
  std::vector<State> states;
  states.reserve(n * nv);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = stream.substream(static_cast<std::uint32_t>(i));
    const Configuration x = dist.decode(rng.categorical(dist.probs()));
    states.insert(states.end(), x.begin(), x.end());
  }
  VertexSet all(nv);
  for (Vertex v = 0; v < nv; ++v) all[v] = v;
  return ParticleEnsemble(FilterKind::kBootstrap, nv, {all}, std::move(states),
                          {std::vector<double>(n, 1.0 / static_cast<double>(n))});
}

ParticleEnsemble sample_operator(const ParticleEnsemble& ens, std::size_t n, const Stream& stream) {
  if (n == 0) throw UsageError("sample operator: N must be >= 1");
  const std::size_t nv = ens.vertex_count();
  std::vector<State> states(n * nv);
  for (std::size_t k = 0; k < ens.blocks().size(); ++k) {
    const IndexSampler sampler(ens.weights(k), Resampling::kMultinomial, stream.child(k));
    for (std::size_t i = 0; i < n; ++i) {
      const auto src = ens.particle(sampler.draw(i, n));
      for (Vertex v : ens.blocks()[k]) states[i * nv + v] = src[v];
    }
  }
  return ParticleEnsemble(ens.mode(), nv, ens.blocks(), std::move(states),
                          std::vector<std::vector<double>>(
                              ens.blocks().size(), std::vector<double>(n, 1.0 / static_cast<double>(n))));
}

ParticleEnsemble bootstrap_step(const LocalHMM& model, const ParticleEnsemble& ens,
                                std::span<const int> y, const Stream& step,
                                const StepOptions& options) {
  check_ensemble(model, ens);
  if (ens.mode() != FilterKind::kBootstrap) throw UsageError("bootstrap step: ensemble is in block mode");
  model.check_observation(y);
  const std::size_t n = ens.size();
  const std::size_t nv = model.vertex_count();

  const IndexSampler sampler(ens.weights(0), options.resampling, step.child({tag(Phase::kResample), 0}));
  const Stream prop = step.child({tag(Phase::kPropagate), 0});
  const VertexSet& all = ens.blocks()[0];
  std::vector<State> next(n * nv);
  std::vector<double> logw(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto parent = ens.particle(sampler.draw(i, n));
    CounterRng rng = prop.substream(static_cast<std::uint32_t>(i));
    const std::span<State> child(next.data() + i * nv, nv);
    propagate_block(model, all, parent, child, rng);
    for (Vertex v : all) logw[i] += model.log_obs(v, child[v], y[v]);
  }
  normalize_log_weights(logw);
  return ParticleEnsemble(FilterKind::kBootstrap, nv, ens.blocks(), std::move(next), {std::move(logw)});
}

ParticleEnsemble block_pf_step(const LocalHMM& model, const BlockPartition& partition,
                               const ParticleEnsemble& ens, std::span<const int> y,
                               const Stream& step, const StepOptions& options) {
  check_ensemble(model, ens);
  if (ens.mode() != FilterKind::kBlock) throw UsageError("block step: ensemble is in bootstrap mode");
  if (ens.blocks() != partition.blocks()) throw UsageError("block step: ensemble partition differs");
  model.check_observation(y);
  const std::size_t n = ens.size();
  const std::size_t nv = model.vertex_count();
  const std::size_t nb = partition.block_count();

  // Assemble hat-x(i) from independent per-block index draws.
  std::vector<State> assembled(n * nv);
  for (std::size_t k = 0; k < nb; ++k) {
    const IndexSampler sampler(ens.weights(k), options.resampling,
                               step.child({tag(Phase::kResample), k}));
    for (std::size_t i = 0; i < n; ++i) {
      const auto src = ens.particle(sampler.draw(i, n));
      for (Vertex v : partition.block(k)) assembled[i * nv + v] = src[v];
    }
  }
  std::vector<State> next(n * nv);
  std::vector<std::vector<double>> weights(nb, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < nb; ++k) {
    const Stream prop = step.child({tag(Phase::kPropagate), k});
    const VertexSet& blk = partition.block(k);
    for (std::size_t i = 0; i < n; ++i) {
      CounterRng rng = prop.substream(static_cast<std::uint32_t>(i));
      const std::span<const State> parent(assembled.data() + i * nv, nv);
      const std::span<State> child(next.data() + i * nv, nv);
      propagate_block(model, blk, parent, child, rng);
      double lw = 0.0;
      for (Vertex v : blk) lw += model.log_obs(v, child[v], y[v]);
      weights[k][i] = lw;
    }
    normalize_log_weights(weights[k]);
  }
  return ParticleEnsemble(FilterKind::kBlock, nv, partition.blocks(), std::move(next), std::move(weights));
}

void run_filter(FilterKind kind, const LocalHMM& model, const BlockPartition* partition,
                std::span<const State> initial, const ObservationPath& observations,
                std::size_t n_particles, const Stream& stream,
                const std::function<void(std::size_t, const ParticleEnsemble&)>& observer,
                const StepOptions& options) {
  model.check_configuration(initial);
  if (kind == FilterKind::kBlock && partition == nullptr) {
    throw UsageError("run_filter: block filter requires a partition");
  }
  const BlockPartition trivial = single_block(model.graph());
  ParticleEnsemble ens = ParticleEnsemble::point_mass(kind, partition ? *partition : trivial, initial,
                                                      n_particles);
  if (observer) observer(0, ens);
  for (std::size_t k = 1; k <= observations.size(); ++k) {
    const Stream step = stream.child(k);
    ens = kind == FilterKind::kBootstrap
              ? bootstrap_step(model, ens, observations[k - 1], step, options)
              : block_pf_step(model, *partition, ens, observations[k - 1], step, options);
    if (observer) observer(k, ens);
  }
}

std::vector<ParticleEnsemble> run_filter(FilterKind kind, const LocalHMM& model,
                                         const BlockPartition* partition,
                                         std::span<const State> initial,
                                         const ObservationPath& observations,
                                         std::size_t n_particles, const Stream& stream,
                                         const StepOptions& options) {
  std::vector<ParticleEnsemble> out;
  out.reserve(observations.size() + 1);
  run_filter(kind, model, partition, initial, observations, n_particles, stream,
             [&](std::size_t, const ParticleEnsemble& e) { out.push_back(e); }, options);
  return out;
}

DistributionTable ensemble_marginal(const ParticleEnsemble& ens, const VertexSet& j,
                                    std::span<const std::size_t> state_sizes, bool allow_product) {
  if (state_sizes.size() != ens.vertex_count()) throw UsageError("marginal: alphabet list mismatch");
  if (j.empty()) return DistributionTable({}, {1.0});
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i] >= ens.vertex_count() || (i > 0 && j[i] <= j[i - 1])) {
      throw UsageError("marginal: J must be ascending vertex ids");
    }
  }
  // Per-block marginals over J ∩ K.
  std::vector<std::size_t> touched;
  for (Vertex v : j) {
    const std::size_t k = ens.block_of(v);
    if (std::find(touched.begin(), touched.end(), k) == touched.end()) touched.push_back(k);
  }
  if (touched.size() > 1 && !allow_product) {
    throw UsageError("marginal: J spans several blocks; pass allow_product for the product marginal");
  }
  std::vector<VertexSet> blocks;
  std::vector<DistributionTable> tables;
  for (std::size_t k : touched) {
    VertexSet local;
    std::vector<std::size_t> radices;
    for (Vertex v : j) {
      if (ens.block_of(v) == k) {
        local.push_back(v);
        radices.push_back(state_sizes[v]);
      }
    }
    const std::size_t size = product_space_size(radices, kFullSpaceCap, "ensemble marginal");
    std::vector<double> probs(size, 0.0);
    const auto& w = ens.weights(k);
    for (std::size_t i = 0; i < ens.size(); ++i) {
      const auto x = ens.particle(i);
      std::size_t idx = 0;
      for (std::size_t t = 0; t < local.size(); ++t) idx = idx * radices[t] + static_cast<std::size_t>(x[local[t]]);
      probs[idx] += w[i];
    }
    blocks.push_back(std::move(local));
    tables.emplace_back(std::move(radices), std::move(probs));
  }
  if (tables.size() == 1) return std::move(tables.front());
  // Relabel J to 0..|J|-1 so the product marginal comes out in J order.
  for (auto& b : blocks) {
    for (Vertex& v : b) v = static_cast<Vertex>(std::lower_bound(j.begin(), j.end(), v) - j.begin());
  }
  const FactorizedDistribution product(std::move(blocks), std::move(tables));
  return product.joint();
}

double effective_sample_size(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return 1.0 / sq;
}

double max_weight(std::span<const double> weights) {
  return *std::max_element(weights.begin(), weights.end());
}

}  // namespace blockpf
