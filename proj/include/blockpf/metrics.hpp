#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "blockpf/exact.hpp"
#include "blockpf/graph.hpp"
#include "blockpf/model.hpp"
#include "blockpf/rng.hpp"

namespace blockpf {

// Largest local space for which tnorm_exact enumerates sign vectors.
inline constexpr std::size_t kTnormEnumerationCap = 16;

// sum_x |p(x) - q(x)|, i.e. sup over |f| <= 1 of |p(f) - q(f)| (twice the
// conventional total variation).
double local_tv(std::span<const double> p, std::span<const double> q);
double local_tv(const DistributionTable& p, const DistributionTable& q);

using SignedTable = std::vector<double>;

// max over f in {-1,+1}^m of sqrt(mean_t (sum_x f(x) delta_t(x))^2). The
// objective is convex in f, so this is the sup over [-1,1]^m. Returns
// nullopt when m exceeds kTnormEnumerationCap; use tnorm_upper instead.
std::optional<double> tnorm_exact(const std::vector<SignedTable>& trial_deltas);

// sqrt(mean_t ||delta_t||_J^2), an upper bound for tnorm_exact.
double tnorm_upper(const std::vector<SignedTable>& trial_deltas);

struct LocalErrorReport {
  VertexSet j;
  std::size_t trials = 0;
  std::vector<double> per_trial;      // ||.||_J per trial, in [0, 2]
  double estimate = 0.0;              // sqrt(mean per_trial^2)
  double stderr_estimate = 0.0;       // delta-method standard error of estimate
  std::optional<double> exact;        // tnorm_exact when enumerable
};

// Builds the report from per-trial signed differences (estimate - reference).
LocalErrorReport make_local_error_report(const VertexSet& j, const std::vector<SignedTable>& deltas);

enum class ErrorReference { kExactFilter, kExactBlockFilter };

// Runs `trials` independent block particle filters (trial t uses
// stream.child({trial-tag, t})) on one fixed observation path and compares
// the time-n marginal on J with the exact filter (or exact block filter).
LocalErrorReport measure_block_pf_error(const LocalHMM& model, const BlockPartition& partition,
                                        const Configuration& x0, const ObservationPath& observations,
                                        const VertexSet& j, std::size_t n_particles,
                                        std::size_t trials, const Stream& stream,
                                        ErrorReference reference = ErrorReference::kExactFilter);

}  // namespace blockpf
