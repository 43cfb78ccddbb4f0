#include "blockpf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "blockpf/errors.hpp"
#include "blockpf/parallel.hpp"
#include "blockpf/particle.hpp"

namespace blockpf {

double local_tv(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw UsageError("local_tv: tables of size " + std::to_string(p.size()) + " and " +
                     std::to_string(q.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return s;
}

double local_tv(const DistributionTable& p, const DistributionTable& q) {
  if (p.radices() != q.radices()) throw UsageError("local_tv: index spaces differ");
  return local_tv(p.probs(), q.probs());
}

std::optional<double> tnorm_exact(const std::vector<SignedTable>& trial_deltas) {
  if (trial_deltas.empty()) return 0.0;
  const std::size_t m = trial_deltas.front().size();
  for (const auto& d : trial_deltas) {
    if (d.size() != m) throw UsageError("tnorm_exact: trials disagree on table size");
  }
  if (m > kTnormEnumerationCap) return std::nullopt;
  if (m == 0) return 0.0;
  const std::size_t t_count = trial_deltas.size();
  // f and -f give the same value: fix f(0) = +1 and walk the remaining signs
  // in Gray-code order, updating each trial's inner product by one flip.
  std::vector<double> dot(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    double s = 0.0;
    for (double x : trial_deltas[t]) s += x;
    dot[t] = s;
  }
  std::vector<int> sign(m, 1);
  auto objective = [&] {
    double acc = 0.0;
    for (double s : dot) acc += s * s;
    return acc;
  };
  double best = objective();
  const std::size_t free_bits = m - 1;
  const std::size_t total = std::size_t{1} << free_bits;
  for (std::size_t step = 1; step < total; ++step) {
    const auto bit = static_cast<std::size_t>(__builtin_ctzll(step));
    const std::size_t coord = bit + 1;
    sign[coord] = -sign[coord];
    for (std::size_t t = 0; t < t_count; ++t) dot[t] += 2.0 * sign[coord] * trial_deltas[t][coord];
    best = std::max(best, objective());
  }
  return std::sqrt(best / static_cast<double>(t_count));
}

double tnorm_upper(const std::vector<SignedTable>& trial_deltas) {
  if (trial_deltas.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& d : trial_deltas) {
    double l1 = 0.0;
    for (double x : d) l1 += std::abs(x);
    acc += l1 * l1;
  }
  return std::sqrt(acc / static_cast<double>(trial_deltas.size()));
}

LocalErrorReport make_local_error_report(const VertexSet& j, const std::vector<SignedTable>& deltas) {
  LocalErrorReport report;
  report.j = j;
  report.trials = deltas.size();
  report.per_trial.reserve(deltas.size());
  for (const auto& d : deltas) {
    double l1 = 0.0;
    for (double x : d) l1 += std::abs(x);
    report.per_trial.push_back(l1);
  }
  report.estimate = tnorm_upper(deltas);
  const auto t = static_cast<double>(deltas.size());
  if (deltas.size() > 1 && report.estimate > 0.0) {
    double mean_sq = 0.0;
    for (double e : report.per_trial) mean_sq += e * e;
    mean_sq /= t;
    double var = 0.0;
    for (double e : report.per_trial) var += (e * e - mean_sq) * (e * e - mean_sq);
    var /= (t - 1.0);
    report.stderr_estimate = std::sqrt(var / t) / (2.0 * report.estimate);
  }
  report.exact = tnorm_exact(deltas);
  return report;
}

LocalErrorReport measure_block_pf_error(const LocalHMM& model, const BlockPartition& partition,
                                        const Configuration& x0, const ObservationPath& observations,
                                        const VertexSet& j, std::size_t n_particles,
                                        std::size_t trials, const Stream& stream,
                                        ErrorReference reference) {
  if (trials == 0) throw UsageError("measure_block_pf_error: trials must be >= 1");
  if (!j.empty() && std::any_of(j.begin(), j.end(), [&](Vertex v) {
        return v >= model.vertex_count() || partition.block_of(v) != partition.block_of(j.front());
      })) {
    throw UsageError("measure_block_pf_error: J must lie within one block");
  }
  DistributionTable truth;
  if (reference == ErrorReference::kExactFilter) {
    const auto filt = exact_filter(model, DistributionTable::point_mass(model.state_sizes(), x0), observations);
    truth = filt.back().marginal(j);
  } else {
    const auto filt = exact_block_filter(
        model, partition, FactorizedDistribution::point_mass(partition, model.state_sizes(), x0),
        observations);
    truth = filt.back().marginal(j);
  }
  std::vector<SignedTable> deltas(trials);
  parallel_for(trials, [&](std::size_t t) {
    const Stream trial_stream = stream.child({static_cast<std::uint64_t>(Phase::kTrial), t});
    DistributionTable est;
    run_filter(FilterKind::kBlock, model, &partition, x0, observations, n_particles, trial_stream,
               [&](std::size_t k, const ParticleEnsemble& e) {
                 if (k == observations.size()) est = ensemble_marginal(e, j, model.state_sizes());
               });
    SignedTable d(truth.size());
    for (std::size_t x = 0; x < d.size(); ++x) d[x] = est[x] - truth[x];
    deltas[t] = std::move(d);
  });
  return make_local_error_report(j, deltas);
}

}  // namespace blockpf
