#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "blockpf/graph.hpp"
#include "blockpf/model.hpp"

namespace blockpf {

inline constexpr std::size_t kFullSpaceCap = std::size_t{1} << 24;
inline constexpr std::size_t kPathSpaceCap = std::size_t{1} << 22;
inline constexpr std::size_t kBlockRegionCap = std::size_t{1} << 24;

// Size of prod_i radices[i]; throws SizeError with `what` once it passes cap.
std::size_t product_space_size(std::span<const std::size_t> radices, std::size_t cap,
                               const char* what);

// Probability table over a product of finite alphabets, row-major mixed-radix
// (first coordinate most significant). Used both for the full space X and for
// local spaces X^J with J sorted ascending.
class DistributionTable {
 public:
  DistributionTable() = default;
  DistributionTable(std::vector<std::size_t> radices, std::vector<double> probs);

  static DistributionTable point_mass(std::vector<std::size_t> radices, std::span<const State> x);
  static DistributionTable uniform(std::vector<std::size_t> radices);

  const std::vector<std::size_t>& radices() const { return radices_; }
  const std::vector<double>& probs() const { return probs_; }
  std::vector<double>& mutable_probs() { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  std::size_t encode(std::span<const State> x) const;
  Configuration decode(std::size_t index) const;

  // Marginal on the coordinates `coords` (sorted ascending). Empty coords
  // gives the one-entry table {1}.
  DistributionTable marginal(const VertexSet& coords) const;

  double total() const;
  void normalize();

 private:
  std::vector<std::size_t> radices_;
  std::vector<double> probs_;
};

// Product-form measure: one table per block over X^K (block vertices
// ascending). The represented joint is the tensor product of the tables.
class FactorizedDistribution {
 public:
  FactorizedDistribution() = default;
  FactorizedDistribution(std::vector<VertexSet> blocks, std::vector<DistributionTable> tables);

  static FactorizedDistribution point_mass(const BlockPartition& partition,
                                           std::span<const std::size_t> state_sizes,
                                           std::span<const State> x);

  const std::vector<VertexSet>& blocks() const { return blocks_; }
  const DistributionTable& block_table(std::size_t k) const { return tables_[k]; }
  std::size_t block_count() const { return tables_.size(); }

  // Marginal on J; J may span blocks (product of the per-block marginals).
  DistributionTable marginal(const VertexSet& j) const;
  // The full joint table (capped at kFullSpaceCap).
  DistributionTable joint() const;

 private:
  std::vector<VertexSet> blocks_;
  std::vector<DistributionTable> tables_;
  std::vector<std::size_t> block_of_;
  std::vector<std::size_t> vertex_radix_;
};

// (P rho)(z) = sum_x rho(x) prod_v p^v(x^{N(v)}, z^v), by eliminating old
// coordinates as soon as no remaining kernel factor depends on them.
DistributionTable predict(const LocalHMM& model, const DistributionTable& dist);

// (C rho)(x) proportional to rho(x) prod_v g^v(x^v, y^v).
DistributionTable correct(const LocalHMM& model, const DistributionTable& dist,
                          std::span<const int> y);

// Exact block marginals; the implied joint is their tensor product.
FactorizedDistribution block_project(const DistributionTable& dist, const BlockPartition& partition);

// output[k] = F_k ... F_1 initial with F_k = C_k P.
std::vector<DistributionTable> exact_filter(const LocalHMM& model, const DistributionTable& initial,
                                            const ObservationPath& observations);

// One step of the block filter C B P for a product-form input, computed block
// by block from the blocks that interact with each block.
FactorizedDistribution block_filter_step(const LocalHMM& model, const BlockPartition& partition,
                                         const FactorizedDistribution& dist, std::span<const int> y);

std::vector<FactorizedDistribution> exact_block_filter(const LocalHMM& model,
                                                       const BlockPartition& partition,
                                                       const FactorizedDistribution& initial,
                                                       const ObservationPath& observations);

// Final-time marginal of the smoothing distribution, by enumerating every
// path X_0..X_n and weighting it by mu(x_0) prod_k p(x_{k-1}, x_k) g(x_k, y_k).
DistributionTable path_posterior_oracle(const LocalHMM& model, const DistributionTable& initial,
                                        const ObservationPath& observations);

}  // namespace blockpf
