#pragma once

// Brute-force references used by the tests. Nothing here calls the library's
// inference code; only model tables and graph neighbourhoods are read.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "blockpf/model.hpp"

namespace oracle {

using blockpf::LocalHMM;
using blockpf::Vertex;

inline std::size_t space_size(const LocalHMM& m) {
  std::size_t s = 1;
  for (auto k : m.state_sizes()) s *= k;
  return s;
}

// First coordinate most significant.
inline std::vector<int> decode(const LocalHMM& m, std::size_t index) {
  const std::size_t n = m.vertex_count();
  std::vector<int> x(n);
  for (std::size_t v = n; v-- > 0;) {
    x[v] = static_cast<int>(index % m.state_size(v));
    index /= m.state_size(v);
  }
  return x;
}

inline std::size_t encode(const LocalHMM& m, const std::vector<int>& x) {
  std::size_t idx = 0;
  for (std::size_t v = 0; v < x.size(); ++v) idx = idx * m.state_size(v) + static_cast<std::size_t>(x[v]);
  return idx;
}

// p^v(x, z) read straight from the table by walking N(v) in ascending order.
inline double kernel_entry(const LocalHMM& m, Vertex v, const std::vector<int>& x, int z) {
  std::size_t row = 0;
  for (Vertex u : m.graph().neighborhood(v)) row = row * m.state_size(u) + static_cast<std::size_t>(x[u]);
  return m.trans_table(v)[row * m.state_size(v) + static_cast<std::size_t>(z)];
}

// Dense joint transition matrix P[x][z] = prod_v p^v(x, z^v).
inline std::vector<std::vector<double>> joint_kernel(const LocalHMM& m) {
  const std::size_t s = space_size(m);
  std::vector<std::vector<double>> p(s, std::vector<double>(s, 1.0));
  for (std::size_t a = 0; a < s; ++a) {
    const auto x = decode(m, a);
    for (std::size_t b = 0; b < s; ++b) {
      const auto z = decode(m, b);
      for (Vertex v = 0; v < m.vertex_count(); ++v) p[a][b] *= kernel_entry(m, v, x, z[v]);
    }
  }
  return p;
}

inline std::vector<double> likelihood(const LocalHMM& m, const std::vector<int>& y) {
  const std::size_t s = space_size(m);
  std::vector<double> g(s, 1.0);
  for (std::size_t a = 0; a < s; ++a) {
    const auto x = decode(m, a);
    for (Vertex v = 0; v < m.vertex_count(); ++v) g[a] *= m.obs_table(v)[static_cast<std::size_t>(x[v]) * m.obs_size(v) + static_cast<std::size_t>(y[v])];
  }
  return g;
}

inline std::vector<double> predict(const std::vector<std::vector<double>>& p, const std::vector<double>& mu) {
  std::vector<double> out(mu.size(), 0.0);
  for (std::size_t a = 0; a < mu.size(); ++a) {
    for (std::size_t b = 0; b < mu.size(); ++b) out[b] += mu[a] * p[a][b];
  }
  return out;
}

inline std::vector<double> bayes(const std::vector<double>& prior, const std::vector<double>& g) {
  std::vector<double> out(prior.size());
  double z = 0.0;
  for (std::size_t a = 0; a < prior.size(); ++a) z += out[a] = prior[a] * g[a];
  for (double& o : out) o /= z;
  return out;
}

// Textbook forward recursion over the full space.
inline std::vector<std::vector<double>> forward(const LocalHMM& m, std::vector<double> mu,
                                                const std::vector<std::vector<int>>& ys) {
  const auto p = joint_kernel(m);
  std::vector<std::vector<double>> out{mu};
  for (const auto& y : ys) {
    mu = bayes(predict(p, mu), likelihood(m, y));
    out.push_back(mu);
  }
  return out;
}

// Marginal of a full-space vector on one vertex.
inline std::vector<double> vertex_marginal(const LocalHMM& m, const std::vector<double>& mu, Vertex v) {
  std::vector<double> out(m.state_size(v), 0.0);
  for (std::size_t a = 0; a < mu.size(); ++a) out[static_cast<std::size_t>(decode(m, a)[v])] += mu[a];
  return out;
}

inline double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
  return s;
}

}  // namespace oracle
