#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace blockpf {

using Vertex = std::size_t;
using VertexSet = std::vector<Vertex>;  // kept sorted ascending

inline constexpr std::size_t kMaxVertices = 2048;
inline constexpr int kUnreachable = -1;

// Finite undirected graph with all-pairs hop distances and r-neighborhoods
// N(v) = {v' : d(v, v') <= r}.
class SpatialGraph {
 public:
  SpatialGraph(std::size_t vertex_count, std::vector<std::pair<Vertex, Vertex>> edges,
               int radius);

  std::size_t vertex_count() const { return n_; }
  int radius() const { return r_; }
  const std::vector<std::pair<Vertex, Vertex>>& edges() const { return edges_; }

  // Hop distance; kUnreachable between components.
  int distance(Vertex a, Vertex b) const { return dist_[a * n_ + b]; }
  // min over pairs; kUnreachable if either set is empty or no path exists.
  int distance(const VertexSet& a, const VertexSet& b) const;

  const VertexSet& neighborhood(Vertex v) const { return nbhd_[v]; }
  std::size_t max_neighborhood() const { return delta_; }  // Delta

  // Lattice metadata, present when built by build_lattice.
  int lattice_dim() const { return q_; }
  int lattice_half_width() const { return d_; }
  std::vector<int> coordinates(Vertex v) const;

 private:
  friend SpatialGraph build_lattice(int q, int d, int r);

  std::size_t n_;
  std::vector<std::pair<Vertex, Vertex>> edges_;
  int r_;
  std::vector<int> dist_;
  std::vector<VertexSet> nbhd_;
  std::size_t delta_ = 0;
  int q_ = 0;
  int d_ = -1;
};

// Square lattice {-d..d}^q with nearest-neighbour edges. Vertex ids are the
// row-major mixed-radix code of the shifted coordinates (first axis slowest).
SpatialGraph build_lattice(int q, int d, int r);

// Path graph 0 - 1 - ... - (n-1); identical to build_lattice(1, ., r) up to
// relabelling but allows even vertex counts.
SpatialGraph build_chain(std::size_t n, int r);

// Graph with no edges: N(v) = {v} for every v.
SpatialGraph build_edgeless(std::size_t n, int r);

// Disjoint cover of V by blocks with the derived quantities |K|_inf,
// Delta_K, inner boundaries and block neighbourhoods N(K).
class BlockPartition {
 public:
  BlockPartition(const SpatialGraph& graph, std::vector<VertexSet> blocks, bool ragged = false);

  std::size_t block_count() const { return blocks_.size(); }
  const std::vector<VertexSet>& blocks() const { return blocks_; }
  const VertexSet& block(std::size_t k) const { return blocks_[k]; }
  std::size_t block_of(Vertex v) const { return block_of_[v]; }
  std::size_t max_block_size() const { return k_max_; }          // |K|_inf
  std::size_t max_block_neighbors() const { return delta_k_; }   // Delta_K
  const VertexSet& inner_boundary(std::size_t k) const { return boundary_[k]; }
  const std::vector<std::size_t>& block_neighbors(std::size_t k) const { return block_nbrs_[k]; }
  // Union of the blocks in N(K), sorted.
  const VertexSet& interaction_region(std::size_t k) const { return region_[k]; }
  bool ragged() const { return ragged_; }
  std::size_t vertex_count() const { return block_of_.size(); }

 private:
  std::vector<VertexSet> blocks_;
  std::vector<std::size_t> block_of_;
  std::size_t k_max_ = 0;
  std::size_t delta_k_ = 0;
  std::vector<VertexSet> boundary_;
  std::vector<std::vector<std::size_t>> block_nbrs_;
  std::vector<VertexSet> region_;
  bool ragged_;
};

// Cover of a lattice by translates of {-b..b}^q. Requires b >= r and
// (2d+1) divisible by (2b+1).
BlockPartition build_block_cover(const SpatialGraph& graph, int q, int d, int b);

// Like build_block_cover but tolerates a ragged last block along each axis;
// the result reports ragged() == true when that happened.
BlockPartition build_block_cover_relaxed(const SpatialGraph& graph, int q, int d, int b);

// Contiguous blocks of `size` vertices on a chain (last block may be short).
BlockPartition build_chain_blocks(const SpatialGraph& graph, std::size_t size);

// Validates disjointness and cover; errors name the offending vertex.
BlockPartition build_partition_arbitrary(const SpatialGraph& graph, std::vector<VertexSet> blocks);

BlockPartition single_block(const SpatialGraph& graph);
BlockPartition singleton_blocks(const SpatialGraph& graph);

}  // namespace blockpf
