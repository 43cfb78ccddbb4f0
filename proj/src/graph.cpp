#include "blockpf/graph.hpp"

#include <algorithm>
#include <deque>
#include <string>

#include "blockpf/errors.hpp"

namespace blockpf {

SpatialGraph::SpatialGraph(std::size_t vertex_count, std::vector<std::pair<Vertex, Vertex>> edges,
                           int radius)
    : n_(vertex_count), edges_(std::move(edges)), r_(radius) {
  if (n_ == 0) throw ConfigError("graph: vertex_count must be positive");
  if (n_ > kMaxVertices) {
    throw SizeError("graph: vertex_count " + std::to_string(n_) + " exceeds maximum " +
                    std::to_string(kMaxVertices));
  }
  if (r_ < 0) throw ConfigError("graph: radius must be nonnegative");

  std::vector<std::vector<Vertex>> adj(n_);
  for (auto& [a, b] : edges_) {
    if (a >= n_ || b >= n_) {
      throw ConfigError("graph: edge (" + std::to_string(a) + "," + std::to_string(b) +
                        ") references a missing vertex");
    }
    if (a == b) throw ConfigError("graph: self loop at vertex " + std::to_string(a));
    if (a > b) std::swap(a, b);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  dist_.assign(n_ * n_, kUnreachable);
  std::deque<Vertex> queue;
  for (Vertex s = 0; s < n_; ++s) {
    int* row = &dist_[s * n_];
    row[s] = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      const Vertex u = queue.front();
      queue.pop_front();
      for (Vertex w : adj[u]) {
        if (row[w] == kUnreachable) {
          row[w] = row[u] + 1;
          queue.push_back(w);
        }
      }
    }
  }

  nbhd_.resize(n_);
  for (Vertex v = 0; v < n_; ++v) {
    for (Vertex w = 0; w < n_; ++w) {
      const int dvw = distance(v, w);
      if (dvw != kUnreachable && dvw <= r_) nbhd_[v].push_back(w);
    }
    delta_ = std::max(delta_, nbhd_[v].size());
  }
}

int SpatialGraph::distance(const VertexSet& a, const VertexSet& b) const {
  int best = kUnreachable;
  for (Vertex u : a) {
    for (Vertex w : b) {
      const int duw = distance(u, w);
      if (duw != kUnreachable && (best == kUnreachable || duw < best)) best = duw;
    }
  }
  return best;
}

std::vector<int> SpatialGraph::coordinates(Vertex v) const {
  if (d_ < 0) throw UsageError("graph: coordinates requested on a non-lattice graph");
  std::vector<int> c(static_cast<std::size_t>(q_));
  const std::size_t side = static_cast<std::size_t>(2 * d_ + 1);
  for (int axis = q_ - 1; axis >= 0; --axis) {
    c[static_cast<std::size_t>(axis)] = static_cast<int>(v % side) - d_;
    v /= side;
  }
  return c;
}

SpatialGraph build_lattice(int q, int d, int r) {
  if (q < 1) throw ConfigError("lattice: q must be >= 1");
  if (d < 0) throw ConfigError("lattice: d must be >= 0");
  if (r < 0) throw ConfigError("lattice: r must be >= 0");
  const std::size_t side = static_cast<std::size_t>(2 * d + 1);
  std::size_t n = 1;
  for (int i = 0; i < q; ++i) {
    n *= side;
    if (n > kMaxVertices) {
      throw SizeError("lattice: (2d+1)^q exceeds maximum vertex count " +
                      std::to_string(kMaxVertices));
    }
  }
  std::vector<std::pair<Vertex, Vertex>> edges;
  std::size_t stride = 1;
  for (int axis = q - 1; axis >= 0; --axis) {
    for (Vertex v = 0; v < n; ++v) {
      if ((v / stride) % side + 1 < side) edges.emplace_back(v, v + stride);
    }
    stride *= side;
  }
  SpatialGraph g(n, std::move(edges), r);
  g.q_ = q;
  g.d_ = d;
  return g;
}

SpatialGraph build_chain(std::size_t n, int r) {
  std::vector<std::pair<Vertex, Vertex>> edges;
  for (Vertex v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
  return SpatialGraph(n, std::move(edges), r);
}

SpatialGraph build_edgeless(std::size_t n, int r) { return SpatialGraph(n, {}, r); }

BlockPartition::BlockPartition(const SpatialGraph& graph, std::vector<VertexSet> blocks,
                               bool ragged)
    : blocks_(std::move(blocks)), ragged_(ragged) {
  const std::size_t n = graph.vertex_count();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  block_of_.assign(n, kNone);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    auto& blk = blocks_[k];
    if (blk.empty()) throw ValidationError("partition: block " + std::to_string(k) + " is empty");
    std::sort(blk.begin(), blk.end());
    for (Vertex v : blk) {
      if (v >= n) throw ValidationError("partition: vertex " + std::to_string(v) + " does not exist");
      if (block_of_[v] != kNone) {
        throw ValidationError("partition: vertex " + std::to_string(v) +
                              " appears in more than one block");
      }
      block_of_[v] = k;
    }
    k_max_ = std::max(k_max_, blk.size());
  }
  for (Vertex v = 0; v < n; ++v) {
    if (block_of_[v] == kNone) {
      throw ValidationError("partition: vertex " + std::to_string(v) + " is not covered");
    }
  }

  const int r = graph.radius();
  boundary_.resize(blocks_.size());
  block_nbrs_.resize(blocks_.size());
  region_.resize(blocks_.size());
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    for (Vertex v : blocks_[k]) {
      for (Vertex w : graph.neighborhood(v)) {
        if (block_of_[w] != k) {
          boundary_[k].push_back(v);
          break;
        }
      }
    }
    for (std::size_t k2 = 0; k2 < blocks_.size(); ++k2) {
      const int dkk = graph.distance(blocks_[k], blocks_[k2]);
      if (dkk != kUnreachable && dkk <= r) {
        block_nbrs_[k].push_back(k2);
        region_[k].insert(region_[k].end(), blocks_[k2].begin(), blocks_[k2].end());
      }
    }
    std::sort(region_[k].begin(), region_[k].end());
    delta_k_ = std::max(delta_k_, block_nbrs_[k].size());
  }
}

namespace {

BlockPartition lattice_cover(const SpatialGraph& graph, int q, int d, int b, bool allow_ragged) {
  if (graph.lattice_dim() != q || graph.lattice_half_width() != d) {
    throw ConfigError("block cover: graph is not the lattice with q=" + std::to_string(q) +
                      ", d=" + std::to_string(d));
  }
  if (b < graph.radius()) {
    throw ConfigError("block cover: block radius b=" + std::to_string(b) +
                      " is smaller than interaction radius r=" + std::to_string(graph.radius()));
  }
  const int side = 2 * d + 1;
  const int width = 2 * b + 1;
  const bool divisible = side % width == 0;
  if (!divisible && !allow_ragged) {
    throw ConfigError("block cover: (2d+1)=" + std::to_string(side) +
                      " is not divisible by (2b+1)=" + std::to_string(width));
  }
  const int per_axis = (side + width - 1) / width;
  std::size_t block_count = 1;
  for (int i = 0; i < q; ++i) block_count *= static_cast<std::size_t>(per_axis);
  std::vector<VertexSet> blocks(block_count);
  for (Vertex v = 0; v < graph.vertex_count(); ++v) {
    const std::vector<int> c = graph.coordinates(v);
    std::size_t idx = 0;
    for (int axis = 0; axis < q; ++axis) {
      idx = idx * static_cast<std::size_t>(per_axis) +
            static_cast<std::size_t>((c[static_cast<std::size_t>(axis)] + d) / width);
    }
    blocks[idx].push_back(v);
  }
  return BlockPartition(graph, std::move(blocks), !divisible);
}

}  // namespace

BlockPartition build_block_cover(const SpatialGraph& graph, int q, int d, int b) {
  return lattice_cover(graph, q, d, b, false);
}

BlockPartition build_block_cover_relaxed(const SpatialGraph& graph, int q, int d, int b) {
  return lattice_cover(graph, q, d, b, true);
}

BlockPartition build_chain_blocks(const SpatialGraph& graph, std::size_t size) {
  if (size == 0) throw ConfigError("chain blocks: block size must be positive");
  std::vector<VertexSet> blocks;
  for (Vertex v = 0; v < graph.vertex_count(); ++v) {
    if (v % size == 0) blocks.emplace_back();
    blocks.back().push_back(v);
  }
  return BlockPartition(graph, std::move(blocks), graph.vertex_count() % size != 0);
}

BlockPartition build_partition_arbitrary(const SpatialGraph& graph, std::vector<VertexSet> blocks) {
  return BlockPartition(graph, std::move(blocks));
}

BlockPartition single_block(const SpatialGraph& graph) {
  VertexSet all(graph.vertex_count());
  for (Vertex v = 0; v < all.size(); ++v) all[v] = v;
  return BlockPartition(graph, {all});
}

BlockPartition singleton_blocks(const SpatialGraph& graph) {
  std::vector<VertexSet> blocks(graph.vertex_count());
  for (Vertex v = 0; v < blocks.size(); ++v) blocks[v] = {v};
  return BlockPartition(graph, std::move(blocks));
}

}  // namespace blockpf
