#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "blockpf/exact.hpp"
#include "blockpf/model.hpp"
#include "blockpf/rng.hpp"

namespace blockpf {

using Matrix = std::vector<std::vector<double>>;

inline constexpr std::size_t kMrfSpaceCap = std::size_t{1} << 24;

// Strictly positive, possibly unnormalized, density on a finite product
// space prod_i S^i (row-major, first site most significant).
class FiniteMRF {
 public:
  FiniteMRF(std::vector<std::size_t> alphabets, std::vector<double> density);

  std::size_t site_count() const { return alphabets_.size(); }
  const std::vector<std::size_t>& alphabets() const { return alphabets_; }
  const std::vector<double>& density() const { return density_; }
  std::size_t stride(std::size_t site) const { return strides_[site]; }
  std::size_t space_size() const { return density_.size(); }
  std::size_t digit(std::size_t index, std::size_t site) const {
    return (index / strides_[site]) % alphabets_[site];
  }

  // rho^i_x: conditional law of site i given the other coordinates of the
  // configuration with flat index x (x^i itself is ignored).
  std::vector<double> conditional(std::size_t site, std::size_t index) const;

  // Normalized joint law.
  DistributionTable probability() const;

 private:
  std::vector<std::size_t> alphabets_;
  std::vector<double> density_;
  std::vector<std::size_t> strides_;
};

// C_ij = 1/2 sup over x, z agreeing off j of ||rho^i_x - rho^i_z||.
Matrix dobrushin_coefficients(const FiniteMRF& rho);

// b_j = sup_x ||rho^j_x - rho_tilde^j_x||.
std::vector<double> perturbation_vector(const FiniteMRF& rho, const FiniteMRF& rho_tilde);

// max_i sum_j C_ij.
double dobrushin_norm(const Matrix& c);

// D = sum_n C^n as (Id - C)^{-1}; throws ConditionFailed unless the
// Dobrushin norm is < 1.
Matrix neumann_inverse(const Matrix& c);
// Truncated series sum_{n <= terms} C^n (cross-check only).
Matrix neumann_series(const Matrix& c, std::size_t terms);

struct ComparisonCertificate {
  Matrix c;
  std::vector<double> b;
  double dobrushin_norm = 0.0;
  std::optional<Matrix> d;  // present when dobrushin_norm < 1
};

ComparisonCertificate make_certificate(const FiniteMRF& rho, const FiniteMRF& rho_tilde);
ComparisonCertificate make_certificate(Matrix c, std::vector<double> b);

// sum_{i in J} sum_j D_ij b_j; ConditionFailed when the condition fails.
double comparison_bound(const ComparisonCertificate& cert, const std::vector<std::size_t>& j);

// ||rho - rho_tilde||_J computed by marginalizing both joints.
double exact_local_distance(const FiniteMRF& rho, const FiniteMRF& rho_tilde,
                            const std::vector<std::size_t>& j);

struct InequalityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

// Weighted matrix bound: with c = max_i sum_j e^{m(i,j)} C_ij < 1, checks
// sum_{j in J} D_ij <= e^{-m(i,J)} / (1 - c). `metric` is |I| x |I|.
InequalityCheck weighted_matrix_bound(const Matrix& c, const Matrix& metric,
                                      const std::vector<std::size_t>& j, std::size_t i);
double weighted_norm(const Matrix& c, const Matrix& metric);

// Minorization bound: nu >= eps gamma, nu' >= eps gamma' entrywise imply
// ||nu - nu'|| <= 2(1 - eps) + eps ||gamma - gamma'||.
InequalityCheck minorization_tv(std::span<const double> nu, std::span<const double> nu_prime,
                                std::span<const double> gamma, std::span<const double> gamma_prime,
                                double eps);

// Reweighting bound: ||mu_L - nu_L|| <= 2 (sup L / inf L) ||mu - nu||.
InequalityCheck weighted_measure_tv(std::span<const double> mu, std::span<const double> nu,
                                    std::span<const double> lambda);

struct EmpiricalProductReport {
  std::size_t power = 0;
  std::size_t particles = 0;
  std::size_t trials = 0;
  std::size_t functions_tested = 0;
  bool enumerated = false;  // all sign functions vs a random family
  double estimate = 0.0;    // max_f sqrt(mean_t |mu^d(f) - hat mu^d(f)|^2)
  double bound = 0.0;       // 4 d / sqrt(N)
  bool holds = false;
};

// Lower estimate of sup_f E[|mu^{(x)d}(f) - hat mu^{(x)d}(f)|^2]^{1/2} over
// +-1 valued test functions, where hat mu is the empirical measure of N
// i.i.d. draws (the same sample in every factor).
EmpiricalProductReport empirical_product_bound(std::span<const double> mu, std::size_t d,
                                               std::size_t n, std::size_t trials,
                                               const Stream& stream);

// Space-time smoothing measure of X_0..X_n given Y_1..Y_n as a finite MRF on
// sites (k, v) -> k * |V| + v. `initial` must be strictly positive.
FiniteMRF smoothing_mrf(const LocalHMM& model, const DistributionTable& initial,
                        const ObservationPath& observations);

// Reference threshold (1 - 1/(6 Delta^2))^{1/(2 Delta)} from the filter
// stability estimate; exposed for reporting only.
double filter_stability_threshold(std::size_t delta);

}  // namespace blockpf
