#include "blockpf/dobrushin.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "blockpf/errors.hpp"
#include "blockpf/metrics.hpp"

namespace blockpf {

namespace {

constexpr double kDominationSlack = 1e-15;
constexpr double kCheckSlack = 1e-12;

void check_square(const Matrix& m, const char* what) {
  for (const auto& row : m) {
    if (row.size() != m.size()) throw UsageError(std::string(what) + ": matrix must be square");
  }
}

double l1(std::span<const double> a, std::span<const double> b) { return local_tv(a, b); }

}  // namespace

FiniteMRF::FiniteMRF(std::vector<std::size_t> alphabets, std::vector<double> density)
    : alphabets_(std::move(alphabets)), density_(std::move(density)) {
  const std::size_t size = product_space_size(alphabets_, kMrfSpaceCap, "finite MRF");
  if (density_.size() != size) {
    throw UsageError("finite MRF: density has " + std::to_string(density_.size()) +
                     " entries, expected " + std::to_string(size));
  }
  for (double p : density_) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ValidationError("finite MRF: density must be strictly positive");
  }
  strides_.resize(alphabets_.size());
  std::size_t s = 1;
  for (std::size_t i = alphabets_.size(); i-- > 0;) {
    strides_[i] = s;
    s *= alphabets_[i];
  }
}

std::vector<double> FiniteMRF::conditional(std::size_t site, std::size_t index) const {
  const std::size_t base = index - digit(index, site) * strides_[site];
  std::vector<double> out(alphabets_[site]);
  double total = 0.0;
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s] = density_[base + s * strides_[site]];
    total += out[s];
  }
  for (double& p : out) p /= total;
  return out;
}

DistributionTable FiniteMRF::probability() const {
  DistributionTable t(alphabets_, density_);
  t.normalize();
  return t;
}

Matrix dobrushin_coefficients(const FiniteMRF& rho) {
  const std::size_t m = rho.site_count();
  Matrix c(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    // Conditionals of site i, cached at representatives with x^i = 0.
    std::vector<std::vector<double>> cond(rho.space_size());
    for (std::size_t idx = 0; idx < rho.space_size(); ++idx) {
      if (rho.digit(idx, i) == 0) cond[idx] = rho.conditional(i, idx);
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      double sup = 0.0;
      for (std::size_t idx = 0; idx < rho.space_size(); ++idx) {
        if (rho.digit(idx, i) != 0) continue;
        const std::size_t xj = rho.digit(idx, j);
        for (std::size_t alt = xj + 1; alt < rho.alphabets()[j]; ++alt) {
          const std::size_t other = idx + (alt - xj) * rho.stride(j);
          sup = std::max(sup, l1(cond[idx], cond[other]));
        }
      }
      c[i][j] = 0.5 * sup;
    }
  }
  return c;
}

std::vector<double> perturbation_vector(const FiniteMRF& rho, const FiniteMRF& rho_tilde) {
  if (rho.alphabets() != rho_tilde.alphabets()) throw UsageError("perturbation vector: index spaces differ");
  std::vector<double> b(rho.site_count(), 0.0);
  for (std::size_t j = 0; j < rho.site_count(); ++j) {
    for (std::size_t idx = 0; idx < rho.space_size(); ++idx) {
      if (rho.digit(idx, j) != 0) continue;
      b[j] = std::max(b[j], l1(rho.conditional(j, idx), rho_tilde.conditional(j, idx)));
    }
  }
  return b;
}

double dobrushin_norm(const Matrix& c) {
  double best = 0.0;
  for (const auto& row : c) {
    double s = 0.0;
    for (double x : row) s += x;
    best = std::max(best, s);
  }
  return best;
}

Matrix neumann_inverse(const Matrix& c) {
  check_square(c, "neumann_inverse");
  const double norm = dobrushin_norm(c);
  if (!(norm < 1.0)) {
    throw ConditionFailed("Dobrushin condition fails: max row sum " + std::to_string(norm) + " >= 1");
  }
  const auto m = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      a(i, j) -= c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  const Eigen::MatrixXd d = a.partialPivLu().solve(Eigen::MatrixXd::Identity(m, m));
  Matrix out(c.size(), std::vector<double>(c.size()));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = d(i, j);
  }
  return out;
}

Matrix neumann_series(const Matrix& c, std::size_t terms) {
  check_square(c, "neumann_series");
  const std::size_t m = c.size();
  Matrix sum(m, std::vector<double>(m, 0.0));
  Matrix power(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) power[i][i] = 1.0;
  for (std::size_t n = 0; n <= terms; ++n) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) sum[i][j] += power[i][j];
    }
    Matrix next(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        if (power[i][k] == 0.0) continue;
        for (std::size_t j = 0; j < m; ++j) next[i][j] += power[i][k] * c[k][j];
      }
    }
    power = std::move(next);
  }
  return sum;
}

ComparisonCertificate make_certificate(Matrix c, std::vector<double> b) {
  check_square(c, "certificate");
  if (b.size() != c.size()) throw UsageError("certificate: b must have one entry per site");
  ComparisonCertificate cert;
  cert.dobrushin_norm = dobrushin_norm(c);
  if (cert.dobrushin_norm < 1.0) cert.d = neumann_inverse(c);
  cert.c = std::move(c);
  cert.b = std::move(b);
  return cert;
}

ComparisonCertificate make_certificate(const FiniteMRF& rho, const FiniteMRF& rho_tilde) {
  return make_certificate(dobrushin_coefficients(rho), perturbation_vector(rho, rho_tilde));
}

double comparison_bound(const ComparisonCertificate& cert, const std::vector<std::size_t>& j) {
  if (!cert.d) {
    throw ConditionFailed("comparison bound: Dobrushin norm " + std::to_string(cert.dobrushin_norm) +
                          " >= 1, bound not available");
  }
  double bound = 0.0;
  for (std::size_t i : j) {
    if (i >= cert.b.size()) throw UsageError("comparison bound: site out of range");
    for (std::size_t k = 0; k < cert.b.size(); ++k) bound += (*cert.d)[i][k] * cert.b[k];
  }
  return bound;
}

double exact_local_distance(const FiniteMRF& rho, const FiniteMRF& rho_tilde,
                            const std::vector<std::size_t>& j) {
  if (rho.alphabets() != rho_tilde.alphabets()) throw UsageError("local distance: index spaces differ");
  VertexSet coords(j.begin(), j.end());
  std::sort(coords.begin(), coords.end());
  return local_tv(rho.probability().marginal(coords), rho_tilde.probability().marginal(coords));
}

double weighted_norm(const Matrix& c, const Matrix& metric) {
  check_square(c, "weighted norm");
  if (metric.size() != c.size()) throw UsageError("weighted norm: metric size mismatch");
  double best = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[i][k] < 0.0) throw UsageError("weighted norm: C must be nonnegative");
      s += std::exp(metric[i][k]) * c[i][k];
    }
    best = std::max(best, s);
  }
  return best;
}

InequalityCheck weighted_matrix_bound(const Matrix& c, const Matrix& metric,
                                      const std::vector<std::size_t>& j, std::size_t i) {
  const double wn = weighted_norm(c, metric);
  if (!(wn < 1.0)) {
    throw ConditionFailed("weighted matrix bound: weighted norm " + std::to_string(wn) + " >= 1");
  }
  if (i >= c.size()) throw UsageError("weighted matrix bound: index out of range");
  const Matrix d = neumann_inverse(c);
  InequalityCheck out;
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t k : j) {
    if (k >= c.size()) throw UsageError("weighted matrix bound: J out of range");
    out.lhs += d[i][k];
    dist = std::min(dist, metric[i][k]);
  }
  out.rhs = j.empty() ? 0.0 : std::exp(-dist) / (1.0 - wn);
  out.holds = out.lhs <= out.rhs * (1.0 + kCheckSlack) + kCheckSlack;
  return out;
}

InequalityCheck minorization_tv(std::span<const double> nu, std::span<const double> nu_prime,
                                std::span<const double> gamma, std::span<const double> gamma_prime,
                                double eps) {
  if (nu.size() != nu_prime.size() || nu.size() != gamma.size() || nu.size() != gamma_prime.size()) {
    throw UsageError("minorization: measures live on different spaces");
  }
  if (!(eps > 0.0) || eps > 1.0) throw UsageError("minorization: eps must lie in (0, 1]");
  for (std::size_t x = 0; x < nu.size(); ++x) {
    if (nu[x] + kDominationSlack < eps * gamma[x] || nu_prime[x] + kDominationSlack < eps * gamma_prime[x]) {
      throw ConditionFailed("minorization: domination nu >= eps gamma violated at point " + std::to_string(x));
    }
  }
  InequalityCheck out;
  out.lhs = l1(nu, nu_prime);
  out.rhs = 2.0 * (1.0 - eps) + eps * l1(gamma, gamma_prime);
  out.holds = out.lhs <= out.rhs + kCheckSlack;
  return out;
}

InequalityCheck weighted_measure_tv(std::span<const double> mu, std::span<const double> nu,
                                    std::span<const double> lambda) {
  if (mu.size() != nu.size() || mu.size() != lambda.size()) {
    throw UsageError("reweighting: measures live on different spaces");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double l : lambda) {
    if (!(l > 0.0) || !std::isfinite(l)) throw ConditionFailed("reweighting: Lambda must be strictly positive");
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  auto reweight = [&](std::span<const double> m) {
    std::vector<double> out(m.size());
    double total = 0.0;
    for (std::size_t x = 0; x < m.size(); ++x) {
      out[x] = m[x] * lambda[x];
      total += out[x];
    }
    for (double& p : out) p /= total;
    return out;
  };
  InequalityCheck out;
  out.lhs = l1(reweight(mu), reweight(nu));
  out.rhs = 2.0 * (hi / lo) * l1(mu, nu);
  out.holds = out.lhs <= out.rhs + kCheckSlack;
  return out;
}

EmpiricalProductReport empirical_product_bound(std::span<const double> mu, std::size_t d,
                                               std::size_t n, std::size_t trials,
                                               const Stream& stream) {
  if (d == 0) throw UsageError("empirical product bound: d must be >= 1");
  if (n == 0 || trials == 0) throw UsageError("empirical product bound: N and trials must be >= 1");
  const std::size_t k = mu.size();
  std::size_t cells = 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (cells > (std::size_t{1} << 20) / k) throw SizeError("empirical product bound: space too large");
    cells *= k;
  }
  EmpiricalProductReport rep;
  rep.power = d;
  rep.particles = n;
  rep.trials = trials;
  constexpr std::size_t kEnumerateCells = 12;
  constexpr std::size_t kRandomFunctions = 256;
  rep.enumerated = cells <= kEnumerateCells;
  const std::size_t functions = rep.enumerated ? (std::size_t{1} << cells) : kRandomFunctions;
  rep.functions_tested = functions;

  // Test functions as sign tables over the cells.
  std::vector<std::vector<double>> f(functions, std::vector<double>(cells));
  for (std::size_t fi = 0; fi < functions; ++fi) {
    CounterRng rng = stream.child(1).substream(static_cast<std::uint32_t>(fi));
    for (std::size_t c = 0; c < cells; ++c) {
      const bool positive = rep.enumerated ? ((fi >> c) & 1u) != 0 : (rng() >> 63) != 0;
      f[fi][c] = positive ? 1.0 : -1.0;
    }
  }
  auto product_law = [&](std::span<const double> base) {
    std::vector<double> law(cells, 1.0);
    for (std::size_t c = 0; c < cells; ++c) {
      std::size_t rem = c;
      for (std::size_t i = 0; i < d; ++i) {
        law[c] *= base[rem % k];
        rem /= k;
      }
    }
    return law;
  };
  const std::vector<double> truth = product_law(mu);
  std::vector<double> truth_f(functions, 0.0);
  for (std::size_t fi = 0; fi < functions; ++fi) {
    for (std::size_t c = 0; c < cells; ++c) truth_f[fi] += f[fi][c] * truth[c];
  }
  std::vector<double> sq(functions, 0.0);
  const Stream draws = stream.child(2);
  for (std::size_t t = 0; t < trials; ++t) {
    CounterRng rng = draws.substream(static_cast<std::uint32_t>(t));
    std::vector<double> empirical(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) empirical[rng.categorical(mu)] += 1.0;
    for (double& p : empirical) p /= static_cast<double>(n);
    const std::vector<double> hat = product_law(empirical);
    for (std::size_t fi = 0; fi < functions; ++fi) {
      double v = 0.0;
      for (std::size_t c = 0; c < cells; ++c) v += f[fi][c] * hat[c];
      sq[fi] += (v - truth_f[fi]) * (v - truth_f[fi]);
    }
  }
  const double best = *std::max_element(sq.begin(), sq.end());
  rep.estimate = std::sqrt(best / static_cast<double>(trials));
  rep.bound = 4.0 * static_cast<double>(d) / std::sqrt(static_cast<double>(n));
  rep.holds = rep.estimate <= rep.bound;
  return rep;
}

FiniteMRF smoothing_mrf(const LocalHMM& model, const DistributionTable& initial,
                        const ObservationPath& observations) {
  const std::size_t nv = model.vertex_count();
  const std::size_t horizon = observations.size();
  if (initial.radices() != model.state_sizes()) throw UsageError("smoothing MRF: initial does not match model");
  std::vector<std::size_t> alphabets;
  for (std::size_t k = 0; k <= horizon; ++k) {
    alphabets.insert(alphabets.end(), model.state_sizes().begin(), model.state_sizes().end());
  }
  const std::size_t size = product_space_size(alphabets, kPathSpaceCap, "smoothing MRF");
  const std::size_t space = initial.size();
  std::vector<Configuration> configs(space);
  for (std::size_t i = 0; i < space; ++i) configs[i] = initial.decode(i);
  std::vector<double> density(size);
  std::vector<std::size_t> path(horizon + 1, 0);
  for (std::size_t idx = 0; idx < size; ++idx) {
    double w = initial[path[0]];
    for (std::size_t k = 1; k <= horizon; ++k) {
      const Configuration& prev = configs[path[k - 1]];
      const Configuration& cur = configs[path[k]];
      for (Vertex v = 0; v < nv; ++v) {
        w *= model.trans(v, prev, cur[v]) * model.obs(v, cur[v], observations[k - 1][v]);
      }
    }
    density[idx] = w;
    for (std::size_t k = horizon + 1; k-- > 0;) {
      if (++path[k] < space) break;
      path[k] = 0;
    }
  }
  return FiniteMRF(std::move(alphabets), std::move(density));
}

double filter_stability_threshold(std::size_t delta) {
  const auto dd = static_cast<double>(delta);
  return std::pow(1.0 - 1.0 / (6.0 * dd * dd), 1.0 / (2.0 * dd));
}

}  // namespace blockpf
