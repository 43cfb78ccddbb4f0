#include "blockpf/exact.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blockpf/errors.hpp"

namespace blockpf {

namespace {

constexpr double kNormalizerFloor = 1e-300;

// Dense table over an ordered list of variables, row-major (last fastest).
// Variable ids: v for the previous-time state of vertex v, n + v for the
// new state.
struct Factor {
  std::vector<std::size_t> vars;
  std::vector<std::size_t> radix;
  std::vector<double> data{1.0};

  std::size_t position(std::size_t var) const {
    const auto it = std::find(vars.begin(), vars.end(), var);
    return it == vars.end() ? vars.size() : static_cast<std::size_t>(it - vars.begin());
  }
};

// Appends the new variable (n + v) and multiplies by p^v(old N(v), new v).
// Every old neighbour of v must be present in f.
Factor extend_with_kernel(const LocalHMM& model, const Factor& f, Vertex v, std::size_t cap) {
  const std::size_t width = model.state_size(v);
  const std::size_t m = f.vars.size();
  std::vector<std::size_t> row_stride(m, 0);
  for (const auto& [w, stride] : model.row_strides(v)) {
    const std::size_t pos = f.position(w);
    if (pos == m) throw NumericError("internal: kernel neighbour eliminated too early");
    row_stride[pos] = stride;
  }
  if (f.data.size() > cap / width) throw SizeError("product space exceeds cap during prediction");
  Factor out;
  out.vars = f.vars;
  out.vars.push_back(model.vertex_count() + v);
  out.radix = f.radix;
  out.radix.push_back(width);
  out.data.resize(f.data.size() * width);

  const std::vector<double>& table = model.trans_table(v);
  std::vector<std::size_t> digit(m, 0);
  std::size_t row = 0;
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const double mass = f.data[i];
    const double* p = table.data() + row * width;
    double* dst = out.data.data() + i * width;
    for (std::size_t z = 0; z < width; ++z) dst[z] = mass * p[z];
    // Advance the mixed-radix counter and the kernel row index with it.
    for (std::size_t pos = m; pos-- > 0;) {
      if (++digit[pos] < f.radix[pos]) {
        row += row_stride[pos];
        break;
      }
      row -= row_stride[pos] * (f.radix[pos] - 1);
      digit[pos] = 0;
    }
  }
  return out;
}

Factor sum_out(const Factor& f, std::size_t var) {
  const std::size_t pos = f.position(var);
  if (pos == f.vars.size()) return f;
  std::size_t outer = 1;
  for (std::size_t i = 0; i < pos; ++i) outer *= f.radix[i];
  std::size_t inner = 1;
  for (std::size_t i = pos + 1; i < f.radix.size(); ++i) inner *= f.radix[i];
  const std::size_t r = f.radix[pos];
  Factor out;
  out.vars = f.vars;
  out.vars.erase(out.vars.begin() + static_cast<long>(pos));
  out.radix = f.radix;
  out.radix.erase(out.radix.begin() + static_cast<long>(pos));
  out.data.assign(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < r; ++k) {
      const double* src = f.data.data() + (o * r + k) * inner;
      double* dst = out.data.data() + o * inner;
      for (std::size_t in = 0; in < inner; ++in) dst[in] += src[in];
    }
  }
  return out;
}

// Outer product f (x) table, appending the table's variables.
Factor outer_product(const Factor& f, const std::vector<std::size_t>& vars,
                     const DistributionTable& table, std::size_t cap) {
  if (table.size() != 0 && f.data.size() > cap / table.size()) {
    throw SizeError("interaction region exceeds the block recursion cap; use smaller blocks");
  }
  Factor out;
  out.vars = f.vars;
  out.vars.insert(out.vars.end(), vars.begin(), vars.end());
  out.radix = f.radix;
  out.radix.insert(out.radix.end(), table.radices().begin(), table.radices().end());
  out.data.resize(f.data.size() * table.size());
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    for (std::size_t j = 0; j < table.size(); ++j) out.data[i * table.size() + j] = f.data[i] * table[j];
  }
  return out;
}

// Multiplies each entry by prod_{v in vertices} g^v(x^v, y^v) where the
// factor's variables are exactly `vertices` (as stored ids) in order.
double apply_likelihood(const LocalHMM& model, std::span<const std::size_t> vertices,
                        std::span<const std::size_t> radices, std::vector<double>& data,
                        std::span<const int> y) {
  const std::size_t m = vertices.size();
  std::vector<std::size_t> digit(m, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double lik = 1.0;
    for (std::size_t pos = 0; pos < m; ++pos) {
      lik *= model.obs(vertices[pos], static_cast<State>(digit[pos]), y[vertices[pos]]);
    }
    data[i] *= lik;
    total += data[i];
    for (std::size_t pos = m; pos-- > 0;) {
      if (++digit[pos] < radices[pos]) break;
      digit[pos] = 0;
    }
  }
  if (!(total > kNormalizerFloor)) {
    throw NumericError("correction normalizer underflow (" + std::to_string(total) + ")");
  }
  for (double& p : data) p /= total;
  return total;
}

}  // namespace

std::size_t product_space_size(std::span<const std::size_t> radices, std::size_t cap,
                               const char* what) {
  std::size_t size = 1;
  for (std::size_t r : radices) {
    if (r == 0) throw UsageError(std::string(what) + ": zero-size alphabet");
    if (size > cap / r) {
      throw SizeError(std::string(what) + ": product space exceeds cap of " + std::to_string(cap));
    }
    size *= r;
  }
  return size;
}

DistributionTable::DistributionTable(std::vector<std::size_t> radices, std::vector<double> probs)
    : radices_(std::move(radices)), probs_(std::move(probs)) {
  const std::size_t expected = product_space_size(radices_, kFullSpaceCap, "distribution");
  if (probs_.size() != expected) {
    throw UsageError("distribution: " + std::to_string(probs_.size()) +
                     " entries for a space of size " + std::to_string(expected));
  }
}

DistributionTable DistributionTable::point_mass(std::vector<std::size_t> radices,
                                                std::span<const State> x) {
  const std::size_t size = product_space_size(radices, kFullSpaceCap, "distribution");
  DistributionTable t(std::move(radices), std::vector<double>(size, 0.0));
  t.probs_[t.encode(x)] = 1.0;
  return t;
}

DistributionTable DistributionTable::uniform(std::vector<std::size_t> radices) {
  const std::size_t size = product_space_size(radices, kFullSpaceCap, "distribution");
  return DistributionTable(std::move(radices),
                           std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

std::size_t DistributionTable::encode(std::span<const State> x) const {
  if (x.size() != radices_.size()) throw UsageError("distribution: configuration length mismatch");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || static_cast<std::size_t>(x[i]) >= radices_[i]) {
      throw UsageError("distribution: configuration entry out of range");
    }
    idx = idx * radices_[i] + static_cast<std::size_t>(x[i]);
  }
  return idx;
}

Configuration DistributionTable::decode(std::size_t index) const {
  Configuration x(radices_.size());
  for (std::size_t i = radices_.size(); i-- > 0;) {
    x[i] = static_cast<State>(index % radices_[i]);
    index /= radices_[i];
  }
  return x;
}

DistributionTable DistributionTable::marginal(const VertexSet& coords) const {
  std::vector<std::size_t> mradix;
  std::vector<std::size_t> mstride(radices_.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = coords.size(); i-- > 0;) {
    if (coords[i] >= radices_.size()) throw UsageError("marginal: coordinate out of range");
    if (i + 1 < coords.size() && coords[i] >= coords[i + 1]) {
      throw UsageError("marginal: coordinates must be strictly ascending");
    }
    mstride[coords[i]] = stride;
    stride *= radices_[coords[i]];
  }
  for (std::size_t c : coords) mradix.push_back(radices_[c]);
  std::vector<double> out(stride, 0.0);
  const std::size_t m = radices_.size();
  std::vector<std::size_t> digit(m, 0);
  std::size_t target = 0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    out[target] += probs_[i];
    for (std::size_t pos = m; pos-- > 0;) {
      if (++digit[pos] < radices_[pos]) {
        target += mstride[pos];
        break;
      }
      target -= mstride[pos] * (radices_[pos] - 1);
      digit[pos] = 0;
    }
  }
  return DistributionTable(std::move(mradix), std::move(out));
}

double DistributionTable::total() const {
  return std::accumulate(probs_.begin(), probs_.end(), 0.0);
}

void DistributionTable::normalize() {
  const double t = total();
  if (!(t > kNormalizerFloor)) throw NumericError("cannot normalize a null measure");
  for (double& p : probs_) p /= t;
}

FactorizedDistribution::FactorizedDistribution(std::vector<VertexSet> blocks,
                                               std::vector<DistributionTable> tables)
    : blocks_(std::move(blocks)), tables_(std::move(tables)) {
  if (blocks_.size() != tables_.size()) throw UsageError("factorized: one table per block required");
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.size();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  block_of_.assign(n, kNone);
  vertex_radix_.assign(n, 0);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    if (tables_[k].radices().size() != blocks_[k].size()) {
      throw UsageError("factorized: table " + std::to_string(k) + " does not match its block");
    }
    for (std::size_t i = 0; i < blocks_[k].size(); ++i) {
      const Vertex v = blocks_[k][i];
      if (v >= n || block_of_[v] != kNone) throw UsageError("factorized: blocks do not partition V");
      block_of_[v] = k;
      vertex_radix_[v] = tables_[k].radices()[i];
    }
  }
}

FactorizedDistribution FactorizedDistribution::point_mass(const BlockPartition& partition,
                                                          std::span<const std::size_t> state_sizes,
                                                          std::span<const State> x) {
  std::vector<DistributionTable> tables;
  for (const VertexSet& blk : partition.blocks()) {
    std::vector<std::size_t> radices;
    Configuration local;
    for (Vertex v : blk) {
      radices.push_back(state_sizes[v]);
      local.push_back(x[v]);
    }
    tables.push_back(DistributionTable::point_mass(std::move(radices), local));
  }
  return FactorizedDistribution(partition.blocks(), std::move(tables));
}

DistributionTable FactorizedDistribution::marginal(const VertexSet& j) const {
  // Group J by block, marginalize each block table, then take the product in
  // ascending-vertex order.
  Factor f;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    VertexSet local;
    std::vector<std::size_t> vars;
    for (std::size_t i = 0; i < blocks_[k].size(); ++i) {
      if (std::binary_search(j.begin(), j.end(), blocks_[k][i])) {
        local.push_back(i);
        vars.push_back(blocks_[k][i]);
      }
    }
    if (local.empty()) continue;
    f = outer_product(f, vars, tables_[k].marginal(local), kFullSpaceCap);
  }
  for (Vertex v : j) {
    if (v >= block_of_.size()) throw UsageError("marginal: vertex out of range");
  }
  // Permute to ascending order of vertex ids.
  std::vector<std::size_t> order(f.vars.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f.vars[a] < f.vars[b]; });
  std::vector<std::size_t> radices(order.size());
  std::vector<std::size_t> src_stride(f.vars.size());
  std::size_t s = 1;
  for (std::size_t i = f.vars.size(); i-- > 0;) {
    src_stride[i] = s;
    s *= f.radix[i];
  }
  for (std::size_t i = 0; i < order.size(); ++i) radices[i] = f.radix[order[i]];
  std::vector<double> out(f.data.size());
  std::vector<std::size_t> digit(order.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = f.data[src];
    for (std::size_t pos = order.size(); pos-- > 0;) {
      const std::size_t st = src_stride[order[pos]];
      if (++digit[pos] < radices[pos]) {
        src += st;
        break;
      }
      src -= st * (radices[pos] - 1);
      digit[pos] = 0;
    }
  }
  return DistributionTable(std::move(radices), std::move(out));
}

DistributionTable FactorizedDistribution::joint() const {
  VertexSet all(block_of_.size());
  std::iota(all.begin(), all.end(), 0);
  return marginal(all);
}

DistributionTable predict(const LocalHMM& model, const DistributionTable& dist) {
  const std::size_t n = model.vertex_count();
  if (dist.radices() != model.state_sizes()) throw UsageError("predict: distribution does not match model");
  const SpatialGraph& g = model.graph();
  // last_use[u]: the largest vertex whose kernel reads u.
  std::vector<Vertex> last_use(n, 0);
  for (Vertex u = 0; u < n; ++u) last_use[u] = g.neighborhood(u).back();

  Factor f;
  f.vars.resize(n);
  std::iota(f.vars.begin(), f.vars.end(), 0);
  f.radix = model.state_sizes();
  f.data = dist.probs();
  for (Vertex v = 0; v < n; ++v) {
    f = extend_with_kernel(model, f, v, 2 * kFullSpaceCap);
    for (Vertex u = 0; u < n; ++u) {
      if (last_use[u] == v) f = sum_out(f, u);
    }
  }
  // Remaining variables are the new states n+0 .. n+n-1 in ascending order.
  DistributionTable out(model.state_sizes(), std::move(f.data));
  return out;
}

DistributionTable correct(const LocalHMM& model, const DistributionTable& dist, std::span<const int> y) {
  if (dist.radices() != model.state_sizes()) throw UsageError("correct: distribution does not match model");
  model.check_observation(y);
  std::vector<std::size_t> vertices(model.vertex_count());
  std::iota(vertices.begin(), vertices.end(), 0);
  std::vector<double> data = dist.probs();
  apply_likelihood(model, vertices, dist.radices(), data, y);
  return DistributionTable(dist.radices(), std::move(data));
}

FactorizedDistribution block_project(const DistributionTable& dist, const BlockPartition& partition) {
  std::vector<DistributionTable> tables;
  tables.reserve(partition.block_count());
  for (const VertexSet& blk : partition.blocks()) tables.push_back(dist.marginal(blk));
  return FactorizedDistribution(partition.blocks(), std::move(tables));
}

std::vector<DistributionTable> exact_filter(const LocalHMM& model, const DistributionTable& initial,
                                            const ObservationPath& observations) {
  product_space_size(model.state_sizes(), kFullSpaceCap, "exact filter");
  if (initial.radices() != model.state_sizes()) {
    throw UsageError("exact filter: initial distribution does not match model");
  }
  std::vector<DistributionTable> out;
  out.reserve(observations.size() + 1);
  out.push_back(initial);
  for (const Observation& y : observations) out.push_back(correct(model, predict(model, out.back()), y));
  return out;
}

FactorizedDistribution block_filter_step(const LocalHMM& model, const BlockPartition& partition,
                                         const FactorizedDistribution& dist, std::span<const int> y) {
  model.check_observation(y);
  if (dist.block_count() != partition.block_count()) {
    throw UsageError("block filter: distribution does not match partition");
  }
  const SpatialGraph& g = model.graph();
  std::vector<DistributionTable> tables;
  tables.reserve(partition.block_count());
  for (std::size_t k = 0; k < partition.block_count(); ++k) {
    const VertexSet& blk = partition.block(k);
    // Vertices whose previous state some kernel in K reads.
    VertexSet needed;
    for (Vertex v : blk) needed.insert(needed.end(), g.neighborhood(v).begin(), g.neighborhood(v).end());
    std::sort(needed.begin(), needed.end());
    needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
    std::vector<std::size_t> needed_radix;
    for (Vertex u : needed) needed_radix.push_back(model.state_size(u));
    product_space_size(needed_radix, kBlockRegionCap,
                       "block filter interaction region (use smaller blocks)");

    // Product over the interacting blocks of their marginals on `needed`.
    Factor f;
    for (std::size_t k2 : partition.block_neighbors(k)) {
      const VertexSet& other = partition.block(k2);
      VertexSet local;
      std::vector<std::size_t> vars;
      for (std::size_t i = 0; i < other.size(); ++i) {
        if (std::binary_search(needed.begin(), needed.end(), other[i])) {
          local.push_back(i);
          vars.push_back(other[i]);
        }
      }
      if (!local.empty()) f = outer_product(f, vars, dist.block_table(k2).marginal(local), kBlockRegionCap);
    }
    // last use of each old variable among kernels of K (processed ascending).
    for (std::size_t idx = 0; idx < blk.size(); ++idx) {
      const Vertex v = blk[idx];
      f = extend_with_kernel(model, f, v, 2 * kBlockRegionCap);
      for (Vertex u : needed) {
        Vertex last = 0;
        bool used = false;
        for (Vertex w : blk) {
          if (std::binary_search(g.neighborhood(w).begin(), g.neighborhood(w).end(), u)) {
            last = w;
            used = true;
          }
        }
        if (used && last == v) f = sum_out(f, u);
      }
    }
    std::vector<std::size_t> radices;
    for (Vertex v : blk) radices.push_back(model.state_size(v));
    apply_likelihood(model, blk, radices, f.data, y);
    tables.emplace_back(std::move(radices), std::move(f.data));
  }
  return FactorizedDistribution(partition.blocks(), std::move(tables));
}

std::vector<FactorizedDistribution> exact_block_filter(const LocalHMM& model,
                                                       const BlockPartition& partition,
                                                       const FactorizedDistribution& initial,
                                                       const ObservationPath& observations) {
  std::vector<FactorizedDistribution> out;
  out.reserve(observations.size() + 1);
  out.push_back(initial);
  for (const Observation& y : observations) {
    out.push_back(block_filter_step(model, partition, out.back(), y));
  }
  return out;
}

DistributionTable path_posterior_oracle(const LocalHMM& model, const DistributionTable& initial,
                                        const ObservationPath& observations) {
  const std::size_t space = product_space_size(model.state_sizes(), kPathSpaceCap, "path oracle");
  const std::size_t steps = observations.size();
  std::size_t paths = 1;
  for (std::size_t k = 0; k <= steps; ++k) {
    if (paths > kPathSpaceCap / space) {
      throw SizeError("path oracle: |X|^(n+1) exceeds cap of " + std::to_string(kPathSpaceCap));
    }
    paths *= space;
  }
  if (initial.radices() != model.state_sizes()) throw UsageError("path oracle: initial does not match model");

  const std::size_t nv = model.vertex_count();
  std::vector<Configuration> configs(space);
  for (std::size_t i = 0; i < space; ++i) configs[i] = initial.decode(i);
  // Joint kernel p(x, z) = prod_v p^v(x, z^v) and joint likelihoods g(x, y_k).
  std::vector<double> kernel(space * space);
  for (std::size_t a = 0; a < space; ++a) {
    for (std::size_t b = 0; b < space; ++b) {
      double p = 1.0;
      for (Vertex v = 0; v < nv; ++v) p *= model.trans(v, configs[a], configs[b][v]);
      kernel[a * space + b] = p;
    }
  }
  std::vector<double> lik(steps * space);
  for (std::size_t k = 0; k < steps; ++k) {
    model.check_observation(observations[k]);
    for (std::size_t a = 0; a < space; ++a) {
      double g = 1.0;
      for (Vertex v = 0; v < nv; ++v) g *= model.obs(v, configs[a][v], observations[k][v]);
      lik[k * space + a] = g;
    }
  }
  std::vector<double> final_mass(space, 0.0);
  std::vector<std::size_t> path(steps + 1, 0);
  for (std::size_t idx = 0; idx < paths; ++idx) {
    double w = initial[path[0]];
    for (std::size_t k = 1; k <= steps && w != 0.0; ++k) {
      w *= kernel[path[k - 1] * space + path[k]] * lik[(k - 1) * space + path[k]];
    }
    final_mass[path[steps]] += w;
    for (std::size_t k = steps + 1; k-- > 0;) {
      if (++path[k] < space) break;
      path[k] = 0;
    }
  }
  DistributionTable out(model.state_sizes(), std::move(final_mass));
  out.normalize();
  return out;
}

}  // namespace blockpf
