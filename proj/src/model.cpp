#include "blockpf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "blockpf/errors.hpp"

namespace blockpf {

namespace {

constexpr double kRowSumTolerance = 1e-12;

void normalize_rows(std::vector<double>& table, std::size_t width, const std::string& field,
                    Positivity positivity) {
  if (width == 0 || table.size() % width != 0) {
    throw ConfigError(field + ": length " + std::to_string(table.size()) +
                      " is not a multiple of row width " + std::to_string(width));
  }
  for (std::size_t row = 0; row * width < table.size(); ++row) {
    double sum = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double p = table[row * width + c];
      const std::string where = field + " row " + std::to_string(row) + " col " + std::to_string(c);
      if (!std::isfinite(p) || p < 0.0) throw ConfigError(where + ": invalid probability");
      if (p == 0.0 && positivity == Positivity::kStrict) {
        throw ConfigError(where + ": zero entry (all entries must be strictly positive)");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ConfigError(field + " row " + std::to_string(row) + ": sums to " +
                        std::to_string(sum) + ", not 1");
    }
    for (std::size_t c = 0; c < width; ++c) table[row * width + c] /= sum;
  }
}

std::pair<double, double> table_bounds(const std::vector<std::vector<double>>& tables) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& t : tables) {
    for (double p : t) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  }
  return {lo, hi};
}

}  // namespace

LocalHMM::LocalHMM(SpatialGraph graph, std::vector<std::size_t> state_sizes,
                   std::vector<std::size_t> obs_sizes, std::vector<std::vector<double>> trans,
                   std::vector<std::vector<double>> obs, Positivity positivity)
    : graph_(std::move(graph)),
      state_sizes_(std::move(state_sizes)),
      obs_sizes_(std::move(obs_sizes)),
      trans_(std::move(trans)),
      obs_(std::move(obs)) {
  const std::size_t n = graph_.vertex_count();
  if (state_sizes_.size() != n) throw ConfigError("alphabets.state: expected one size per vertex");
  if (obs_sizes_.size() != n) throw ConfigError("alphabets.obs: expected one size per vertex");
  if (trans_.size() != n) throw ConfigError("trans: expected one table per vertex");
  if (obs_.size() != n) throw ConfigError("obs: expected one table per vertex");

  row_strides_.resize(n);
  for (Vertex v = 0; v < n; ++v) {
    if (state_sizes_[v] == 0) throw ConfigError("alphabets.state[" + std::to_string(v) + "] is zero");
    if (obs_sizes_[v] == 0) throw ConfigError("alphabets.obs[" + std::to_string(v) + "] is zero");
    const VertexSet& nb = graph_.neighborhood(v);
    std::size_t rows = 1;
    row_strides_[v].resize(nb.size());
    for (std::size_t i = nb.size(); i-- > 0;) {
      row_strides_[v][i] = {nb[i], rows};
      rows *= state_sizes_[nb[i]];
    }
    const std::string tfield = "trans[" + std::to_string(v) + "]";
    if (trans_[v].size() != rows * state_sizes_[v]) {
      throw ConfigError(tfield + ": expected " + std::to_string(rows) + " rows of width " +
                        std::to_string(state_sizes_[v]) + ", got " +
                        std::to_string(trans_[v].size()) + " entries");
    }
    normalize_rows(trans_[v], state_sizes_[v], tfield, positivity);
    const std::string ofield = "obs[" + std::to_string(v) + "]";
    if (obs_[v].size() != state_sizes_[v] * obs_sizes_[v]) {
      throw ConfigError(ofield + ": expected " + std::to_string(state_sizes_[v]) + " rows of width " +
                        std::to_string(obs_sizes_[v]));
    }
    normalize_rows(obs_[v], obs_sizes_[v], ofield, positivity);
  }
  log_obs_ = obs_;
  for (auto& t : log_obs_) {
    for (double& p : t) p = std::log(p);
  }
  eps_ = table_bounds(trans_);
  kappa_ = table_bounds(obs_);
}

void LocalHMM::check_configuration(std::span<const State> x) const {
  if (x.size() != vertex_count()) {
    throw UsageError("configuration has " + std::to_string(x.size()) + " entries, expected " +
                     std::to_string(vertex_count()));
  }
  for (Vertex v = 0; v < x.size(); ++v) {
    if (x[v] < 0 || static_cast<std::size_t>(x[v]) >= state_sizes_[v]) {
      throw UsageError("configuration entry " + std::to_string(v) + " out of range");
    }
  }
}

void LocalHMM::check_observation(std::span<const int> y) const {
  if (y.size() != vertex_count()) {
    throw UsageError("observation has " + std::to_string(y.size()) + " entries, expected " +
                     std::to_string(vertex_count()));
  }
  for (Vertex v = 0; v < y.size(); ++v) {
    if (y[v] < 0 || static_cast<std::size_t>(y[v]) >= obs_sizes_[v]) {
      throw UsageError("observation entry " + std::to_string(v) + " out of range");
    }
  }
}

LocalHMM build_product_model(const LocalHMM& base, std::size_t copies) {
  if (base.vertex_count() != 1) throw UsageError("product model: base must have one vertex");
  if (copies == 0) throw ConfigError("product model: copies must be positive");
  const bool strict = base.eps_bounds().first > 0.0 && base.kappa_bounds().first > 0.0;
  return LocalHMM(build_edgeless(copies, base.graph().radius()),
                  std::vector<std::size_t>(copies, base.state_size(0)),
                  std::vector<std::size_t>(copies, base.obs_size(0)),
                  std::vector<std::vector<double>>(copies, base.trans_table(0)),
                  std::vector<std::vector<double>>(copies, base.obs_table(0)),
                  strict ? Positivity::kStrict : Positivity::kAllowZero);
}

namespace {

void fill_mixed_row(std::span<double> row, double mixing, CounterRng& rng) {
  double sum = 0.0;
  for (double& p : row) {
    p = -std::log1p(-rng.uniform());
    sum += p;
  }
  const double uniform = 1.0 / static_cast<double>(row.size());
  for (double& p : row) p = mixing * uniform + (1.0 - mixing) * p / sum;
}

}  // namespace

LocalHMM random_local_hmm(const SpatialGraph& graph, const RandomModelOptions& options,
                          std::uint64_t seed) {
  if (options.mixing < 0.0 || options.mixing > 1.0 || options.obs_mixing < 0.0 ||
      options.obs_mixing > 1.0) {
    throw ConfigError("random model: mixing parameters must lie in [0, 1]");
  }
  const std::size_t n = graph.vertex_count();
  const std::size_t xs = options.state_size;
  const std::size_t ys = options.obs_size;
  if (xs == 0 || ys == 0) throw ConfigError("random model: alphabet sizes must be positive");
  const Stream root(seed);
  std::vector<std::vector<double>> trans(n);
  std::vector<std::vector<double>> obs(n);

  if (options.homogeneous) {
    // Chain check: vertex v's neighbours are exactly v-r..v+r clipped.
    const int r = graph.radius();
    for (Vertex v = 0; v < n; ++v) {
      for (Vertex w : graph.neighborhood(v)) {
        if (static_cast<int>(w) - static_cast<int>(v) != graph.distance(v, w) &&
            static_cast<int>(v) - static_cast<int>(w) != graph.distance(v, w)) {
          throw ConfigError("random model: homogeneous kernels require a chain graph");
        }
      }
    }
    const std::size_t width = static_cast<std::size_t>(2 * r + 1);
    std::size_t pattern_rows = 1;
    for (std::size_t i = 0; i < width; ++i) pattern_rows *= xs;
    std::vector<double> pattern(pattern_rows * xs);
    CounterRng rng = root.child({11}).substream(0);
    for (std::size_t row = 0; row < pattern_rows; ++row) {
      fill_mixed_row({pattern.data() + row * xs, xs}, options.mixing, rng);
    }
    std::vector<double> obs_row(xs * ys);
    CounterRng orng = root.child({12}).substream(0);
    for (std::size_t x = 0; x < xs; ++x) {
      fill_mixed_row({obs_row.data() + x * ys, ys}, options.obs_mixing, orng);
    }
    for (Vertex v = 0; v < n; ++v) {
      const VertexSet& nb = graph.neighborhood(v);
      std::size_t rows = 1;
      for (std::size_t i = 0; i < nb.size(); ++i) rows *= xs;
      trans[v].resize(rows * xs);
      std::vector<State> local(nb.size(), 0);
      for (std::size_t row = 0; row < rows; ++row) {
        std::size_t rem = row;
        for (std::size_t i = nb.size(); i-- > 0;) {
          local[i] = static_cast<State>(rem % xs);
          rem /= xs;
        }
        // Offset pattern code over v-r..v+r with phantom state 0.
        std::size_t code = 0;
        for (int off = -r; off <= r; ++off) {
          const long w = static_cast<long>(v) + off;
          State s = 0;
          for (std::size_t i = 0; i < nb.size(); ++i) {
            if (static_cast<long>(nb[i]) == w) s = local[i];
          }
          code = code * xs + static_cast<std::size_t>(s);
        }
        std::copy_n(pattern.begin() + static_cast<long>(code * xs), xs,
                    trans[v].begin() + static_cast<long>(row * xs));
      }
      obs[v] = obs_row;
    }
  } else {
    for (Vertex v = 0; v < n; ++v) {
      std::size_t rows = 1;
      for (std::size_t i = 0; i < graph.neighborhood(v).size(); ++i) rows *= xs;
      trans[v].resize(rows * xs);
      CounterRng rng = root.child({1, v}).substream(0);
      for (std::size_t row = 0; row < rows; ++row) {
        fill_mixed_row({trans[v].data() + row * xs, xs}, options.mixing, rng);
      }
      obs[v].resize(xs * ys);
      CounterRng orng = root.child({2, v}).substream(0);
      for (std::size_t x = 0; x < xs; ++x) {
        fill_mixed_row({obs[v].data() + x * ys, ys}, options.obs_mixing, orng);
      }
    }
  }
  // Rows from fill_mixed_row sum to 1 up to rounding; renormalization in the
  // constructor absorbs that.
  return LocalHMM(graph, std::vector<std::size_t>(n, xs), std::vector<std::size_t>(n, ys),
                  std::move(trans), std::move(obs));
}

Trajectory simulate(const LocalHMM& model, const Configuration& initial, std::size_t n,
                    std::uint64_t seed) {
  model.check_configuration(initial);
  Trajectory out;
  out.states.reserve(n + 1);
  out.states.push_back(initial);
  out.observations.reserve(n);
  const Stream root = Stream(seed).child(static_cast<std::uint64_t>(Phase::kSimulate));
  const std::size_t nv = model.vertex_count();
  for (std::size_t k = 1; k <= n; ++k) {
    const Stream step = root.child(k);
    const Configuration& prev = out.states.back();
    Configuration next(nv);
    Observation y(nv);
    for (Vertex v = 0; v < nv; ++v) {
      CounterRng rng = step.substream(static_cast<std::uint32_t>(v));
      next[v] = static_cast<State>(rng.categorical(model.trans_row(v, model.trans_row_index(v, prev))));
      const auto obs_row = std::span<const double>(model.obs_table(v))
                               .subspan(static_cast<std::size_t>(next[v]) * model.obs_size(v),
                                        model.obs_size(v));
      y[v] = static_cast<int>(rng.categorical(obs_row));
    }
    out.states.push_back(std::move(next));
    out.observations.push_back(std::move(y));
  }
  return out;
}

}  // namespace blockpf
