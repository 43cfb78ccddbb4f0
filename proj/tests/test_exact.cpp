#include <gtest/gtest.h>

#include <cmath>

#include "blockpf/errors.hpp"
#include "blockpf/exact.hpp"
#include "blockpf/metrics.hpp"
#include "oracles.hpp"

using namespace blockpf;

namespace {

std::vector<double> random_simplex(std::size_t n, std::uint64_t seed) {
  auto rng = Stream(seed).substream(0);
  std::vector<double> p(n);
  double s = 0.0;
  for (double& x : p) s += x = -std::log(1.0 - rng.uniform());
  for (double& x : p) x /= s;
  return p;
}

DistributionTable table_of(const LocalHMM& m, std::vector<double> p) {
  return DistributionTable(m.state_sizes(), std::move(p));
}

// Full-space vector -> product of its block marginals.
std::vector<double> project_oracle(const LocalHMM& m, const std::vector<double>& mu, const BlockPartition& part) {
  std::vector<std::vector<double>> marg(part.block_count());
  std::vector<std::size_t> stride(part.block_count());
  for (std::size_t k = 0; k < part.block_count(); ++k) {
    std::size_t s = 1;
    for (Vertex v : part.block(k)) s *= m.state_size(v);
    marg[k].assign(s, 0.0);
  }
  auto block_index = [&](const std::vector<int>& x, std::size_t k) {
    std::size_t idx = 0;
    for (Vertex v : part.block(k)) idx = idx * m.state_size(v) + static_cast<std::size_t>(x[v]);
    return idx;
  };
  for (std::size_t a = 0; a < mu.size(); ++a) {
    const auto x = oracle::decode(m, a);
    for (std::size_t k = 0; k < part.block_count(); ++k) marg[k][block_index(x, k)] += mu[a];
  }
  std::vector<double> out(mu.size(), 1.0);
  for (std::size_t a = 0; a < mu.size(); ++a) {
    const auto x = oracle::decode(m, a);
    for (std::size_t k = 0; k < part.block_count(); ++k) out[a] *= marg[k][block_index(x, k)];
  }
  return out;
}

// Prediction without materializing the joint kernel.
std::vector<double> predict_streaming(const LocalHMM& m, const std::vector<double>& mu) {
  const std::size_t n = m.vertex_count();
  std::vector<double> out(mu.size(), 0.0);
  std::vector<std::vector<int>> zs(mu.size());
  for (std::size_t b = 0; b < mu.size(); ++b) zs[b] = oracle::decode(m, b);
  std::vector<std::vector<double>> rows(n);
  for (std::size_t a = 0; a < mu.size(); ++a) {
    if (mu[a] == 0.0) continue;
    const auto x = oracle::decode(m, a);
    for (Vertex v = 0; v < n; ++v) {
      rows[v].resize(m.state_size(v));
      for (std::size_t z = 0; z < m.state_size(v); ++z) rows[v][z] = oracle::kernel_entry(m, v, x, static_cast<int>(z));
    }
    for (std::size_t b = 0; b < mu.size(); ++b) {
      double p = mu[a];
      for (Vertex v = 0; v < n; ++v) p *= rows[v][static_cast<std::size_t>(zs[b][v])];
      out[b] += p;
    }
  }
  return out;
}

}  // namespace

TEST(Predict, DeterministicKernelMovesPointMass) {
  // Single vertex, 3 states, z = x + 1 mod 3.
  const LocalHMM m(build_chain(1, 1), {3}, {2}, {{0, 1, 0, 0, 0, 1, 1, 0, 0}}, {{0.5, 0.5, 0.5, 0.5, 0.5, 0.5}},
                   Positivity::kAllowZero);
  const Configuration x{1};
  const auto out = predict(m, DistributionTable::point_mass(m.state_sizes(), x));
  EXPECT_EQ(out.probs(), (std::vector<double>{0, 0, 1}));
}

TEST(Predict, DoublyStochasticKeepsUniform) {
  const LocalHMM m(build_chain(1, 1), {3}, {2}, {{0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2}},
                   {{0.5, 0.5, 0.5, 0.5, 0.5, 0.5}});
  const auto out = predict(m, DistributionTable::uniform(m.state_sizes()));
  for (double p : out.probs()) EXPECT_NEAR(p, 1.0 / 3, 1e-15);
}

TEST(Predict, MatchesJointKernel) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LocalHMM m = random_local_hmm(build_chain(2, 1), {}, seed);
    const auto mu = random_simplex(4, seed + 100);
    const auto expect = oracle::predict(oracle::joint_kernel(m), mu);
    EXPECT_LT(oracle::max_abs(predict(m, table_of(m, mu)).probs(), expect), 1e-14);
  }
  // Larger radius, ternary states and a 2-d lattice.
  const LocalHMM wide = random_local_hmm(build_chain(5, 2), {3, 2, 0.1, 0.3, false}, 3);
  const auto mu = random_simplex(243, 4);
  EXPECT_LT(oracle::max_abs(predict(wide, table_of(wide, mu)).probs(), oracle::predict(oracle::joint_kernel(wide), mu)),
            1e-14);
  const LocalHMM sq = random_local_hmm(build_lattice(2, 1, 1), {}, 6);
  const auto mu2 = random_simplex(512, 7);
  EXPECT_LT(oracle::max_abs(predict(sq, table_of(sq, mu2)).probs(), oracle::predict(oracle::joint_kernel(sq), mu2)),
            1e-14);
}

TEST(Predict, RejectsOversizedSpace) {
  const LocalHMM m = random_local_hmm(build_chain(30, 1), {}, 1);
  EXPECT_THROW(DistributionTable::uniform(m.state_sizes()), SizeError);
}

TEST(Correct, UninformativeObservationIsIdentity) {
  const LocalHMM m(build_chain(2, 1), {2, 2}, {3, 3}, {{0.7, 0.3, 0.2, 0.8, 0.6, 0.4, 0.1, 0.9}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5}},
                   {std::vector<double>(6, 1.0 / 3), std::vector<double>(6, 1.0 / 3)});
  const auto mu = random_simplex(4, 1);
  const auto out = correct(m, table_of(m, mu), std::vector<int>{2, 0});
  EXPECT_LT(oracle::max_abs(out.probs(), mu), 1e-15);
}

TEST(Correct, PointMassPreservedAndBayesRule) {
  const LocalHMM m = random_local_hmm(build_chain(3, 1), {}, 2);
  const Configuration x{1, 0, 1};
  const auto pm = correct(m, DistributionTable::point_mass(m.state_sizes(), x), std::vector<int>{0, 0, 1});
  EXPECT_EQ(pm.probs(), DistributionTable::point_mass(m.state_sizes(), x).probs());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LocalHMM r = random_local_hmm(build_chain(3, 1), {}, seed);
    const auto mu = random_simplex(8, seed + 50);
    const std::vector<int> y{static_cast<int>(seed % 2), 1, static_cast<int>((seed / 2) % 2)};
    const auto expect = oracle::bayes(oracle::predict(oracle::joint_kernel(r), mu), oracle::likelihood(r, y));
    const auto got = correct(r, predict(r, table_of(r, mu)), y);
    EXPECT_LT(oracle::max_abs(got.probs(), expect), 1e-14);
  }
}

TEST(BlockProject, Examples) {
  const LocalHMM m = random_local_hmm(build_chain(4, 1), {}, 1);
  const auto mu = random_simplex(16, 9);
  const auto whole = block_project(table_of(m, mu), single_block(m.graph()));
  EXPECT_LT(oracle::max_abs(whole.block_table(0).probs(), mu), 1e-15);

  // Product measure aligned with the blocks.
  const auto part = build_chain_blocks(m.graph(), 2);
  const auto a = random_simplex(4, 1);
  const auto b = random_simplex(4, 2);
  std::vector<double> prod(16);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) prod[i * 4 + j] = a[i] * b[j];
  }
  EXPECT_LT(oracle::max_abs(block_project(table_of(m, prod), part).joint().probs(), prod), 1e-15);

  // Correlated pair: the projection is the product of marginals.
  const LocalHMM pair = random_local_hmm(build_chain(2, 1), {}, 1);
  const std::vector<double> corr{0.4, 0.1, 0.1, 0.4};
  const auto split = block_project(table_of(pair, corr), singleton_blocks(pair.graph()));
  const std::vector<double> indep{0.25, 0.25, 0.25, 0.25};
  EXPECT_LT(oracle::max_abs(split.joint().probs(), indep), 1e-15);
  EXPECT_NEAR(local_tv(split.joint(), table_of(pair, corr)), 0.6, 1e-15);
}

TEST(Factorized, MarginalAcrossBlocksIsOuterProduct) {
  const LocalHMM m = random_local_hmm(build_chain(4, 1), {}, 1);
  const auto part = build_chain_blocks(m.graph(), 2);
  const auto mu = random_simplex(16, 3);
  const auto f = block_project(table_of(m, mu), part);
  const auto joint = f.joint();
  for (const VertexSet& j : {VertexSet{0}, VertexSet{1, 2}, VertexSet{0, 3}, VertexSet{0, 1, 2, 3}}) {
    EXPECT_LT(oracle::max_abs(f.marginal(j).probs(), joint.marginal(j).probs()), 1e-15);
  }
}

TEST(ExactFilter, HorizonZeroAndForwardAlgorithm) {
  const LocalHMM m = random_local_hmm(build_chain(1, 1), {3, 3, 0.2, 0.2, false}, 4);
  const auto init = DistributionTable(m.state_sizes(), random_simplex(3, 1));
  const auto zero = exact_filter(m, init, {});
  ASSERT_EQ(zero.size(), 1u);
  EXPECT_EQ(zero[0].probs(), init.probs());

  const auto traj = simulate(m, {0}, 30, 2);
  const auto got = exact_filter(m, init, traj.observations);
  // Classical forward algorithm on the 3x3 chain.
  std::vector<double> alpha = init.probs();
  for (std::size_t k = 0; k < traj.observations.size(); ++k) {
    std::vector<double> next(3, 0.0);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) next[b] += alpha[a] * m.trans_table(0)[a * 3 + b];
    }
    double z = 0.0;
    for (int b = 0; b < 3; ++b) z += next[b] *= m.obs_table(0)[b * 3 + traj.observations[k][0]];
    for (double& x : next) x /= z;
    alpha = next;
    EXPECT_LT(oracle::max_abs(got[k + 1].probs(), alpha), 1e-14);
  }
}

TEST(ExactFilter, MatchesPathPosteriorAndForwardOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LocalHMM m = random_local_hmm(build_chain(3, 1), {}, seed);
    const Configuration x0{0, 1, 0};
    const auto init = DistributionTable::point_mass(m.state_sizes(), x0);
    const auto obs = simulate(m, x0, 4, seed + 10).observations;
    const auto filt = exact_filter(m, init, obs);
    EXPECT_LT(local_tv(filt.back(), path_posterior_oracle(m, init, obs)), 1e-10);
    const auto fwd = oracle::forward(m, init.probs(), obs);
    for (std::size_t k = 0; k < filt.size(); ++k) EXPECT_LT(oracle::l1(filt[k].probs(), fwd[k]), 1e-12);
  }
}

TEST(PathPosterior, Examples) {
  const LocalHMM m = random_local_hmm(build_chain(2, 1), {}, 3);
  const auto init = DistributionTable(m.state_sizes(), random_simplex(4, 3));
  EXPECT_LT(oracle::max_abs(path_posterior_oracle(m, init, {}).probs(), init.probs()), 1e-15);
  const LocalHMM flat(m.graph(), m.state_sizes(), m.obs_sizes(), {m.trans_table(0), m.trans_table(1)},
                      {{0.5, 0.5, 0.5, 0.5}, {0.5, 0.5, 0.5, 0.5}});
  const ObservationPath obs{{0, 1}, {1, 1}, {0, 0}};
  std::vector<double> mu = init.probs();
  const auto p = oracle::joint_kernel(flat);
  for (int k = 0; k < 3; ++k) mu = oracle::predict(p, mu);
  EXPECT_LT(oracle::max_abs(path_posterior_oracle(flat, init, obs).probs(), mu), 1e-14);
}

TEST(ExactBlockFilter, SingleBlockEqualsFilter) {
  const LocalHMM m = random_local_hmm(build_chain(4, 1), {}, 8);
  const Configuration x0(4, 0);
  const auto obs = simulate(m, x0, 8, 1).observations;
  const auto whole = single_block(m.graph());
  const auto a = exact_filter(m, DistributionTable::point_mass(m.state_sizes(), x0), obs);
  const auto b = exact_block_filter(m, whole, FactorizedDistribution::point_mass(whole, m.state_sizes(), x0), obs);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT(local_tv(a[k], b[k].joint()), 1e-12);
}

TEST(ExactBlockFilter, ZeroBiasOnProductModels) {
  const LocalHMM base = random_local_hmm(build_chain(1, 1), {}, 12);
  for (std::size_t d : {2, 4}) {
    const LocalHMM m = build_product_model(base, d);
    const Configuration x0(d, 0);
    const auto obs = simulate(m, x0, 6, d).observations;
    const auto part = singleton_blocks(m.graph());
    const auto a = exact_filter(m, DistributionTable::point_mass(m.state_sizes(), x0), obs);
    const auto b = exact_block_filter(m, part, FactorizedDistribution::point_mass(part, m.state_sizes(), x0), obs);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT(local_tv(a[k], b[k].joint()), 1e-12);
  }
}

TEST(ExactBlockFilter, MatchesFullSpaceDefinition) {
  const LocalHMM m = random_local_hmm(build_chain(12, 1), {}, 21);
  const Configuration x0(12, 0);
  const auto obs = simulate(m, x0, 3, 5).observations;
  const auto part = build_chain_blocks(m.graph(), 4);
  const auto blockf = exact_block_filter(m, part, FactorizedDistribution::point_mass(part, m.state_sizes(), x0), obs);
  std::vector<double> mu = DistributionTable::point_mass(m.state_sizes(), x0).probs();
  for (std::size_t k = 0; k < obs.size(); ++k) {
    mu = oracle::bayes(project_oracle(m, predict_streaming(m, mu), part), oracle::likelihood(m, obs[k]));
    EXPECT_LT(oracle::l1(blockf[k + 1].joint().probs(), mu), 1e-10) << "step " << k + 1;
  }
}

TEST(ExactBlockFilter, NeedsOnlyTheInteractionRegion) {
  // 40 binary vertices cannot be held as one table, but blocks of 4 can.
  const LocalHMM m = random_local_hmm(build_chain(40, 1), {}, 2);
  const Configuration x0(40, 0);
  const auto obs = simulate(m, x0, 3, 5).observations;
  const auto part = build_chain_blocks(m.graph(), 4);
  const auto f = exact_block_filter(m, part, FactorizedDistribution::point_mass(part, m.state_sizes(), x0), obs);
  for (std::size_t k = 0; k < part.block_count(); ++k) EXPECT_NEAR(f.back().block_table(k).total(), 1.0, 1e-12);
}
