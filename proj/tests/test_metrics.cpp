#include <gtest/gtest.h>

#include <cmath>

#include "blockpf/errors.hpp"
#include "blockpf/metrics.hpp"
#include "blockpf/rng.hpp"

using namespace blockpf;

namespace {

// sup over |f| <= 1 of sqrt(mean_t (Delta_t . f)^2) by scanning a fine grid of
// f in [-1,1]^m (the maximum sits at a vertex, so the grid includes it).
double tnorm_grid(const std::vector<SignedTable>& deltas) {
  const std::size_t m = deltas.front().size();
  const int steps = 4;
  std::size_t total = 1;
  for (std::size_t i = 0; i < m; ++i) total *= steps + 1;
  double best = 0.0;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<double> f(m);
    std::size_t c = code;
    for (std::size_t i = 0; i < m; ++i) {
      f[i] = -1.0 + 2.0 * static_cast<double>(c % (steps + 1)) / steps;
      c /= steps + 1;
    }
    double ms = 0.0;
    for (const auto& d : deltas) {
      double v = 0.0;
      for (std::size_t i = 0; i < m; ++i) v += d[i] * f[i];
      ms += v * v;
    }
    best = std::max(best, std::sqrt(ms / static_cast<double>(deltas.size())));
  }
  return best;
}

}  // namespace

TEST(LocalTv, Examples) {
  const std::vector<double> p{0.7, 0.3};
  const std::vector<double> q{0.5, 0.5};
  EXPECT_DOUBLE_EQ(local_tv(p, p), 0.0);
  EXPECT_NEAR(local_tv(p, q), 0.4, 1e-15);
  const std::vector<double> a{1, 0, 0};
  const std::vector<double> b{0, 0, 1};
  EXPECT_DOUBLE_EQ(local_tv(a, b), 2.0);
  EXPECT_THROW(local_tv(p, a), UsageError);
}

TEST(Tnorm, Examples) {
  EXPECT_EQ(tnorm_exact({{0.0, 0.0}, {0.0, 0.0}}).value(), 0.0);
  EXPECT_DOUBLE_EQ(tnorm_upper({{0.0, 0.0}}), 0.0);
  const SignedTable single{0.2, -0.05, -0.15};
  EXPECT_NEAR(tnorm_exact({single}).value(), 0.4, 1e-15);
  EXPECT_NEAR(tnorm_upper({single}), 0.4, 1e-15);
  EXPECT_NEAR(tnorm_exact({{0.1, -0.1}, {-0.1, 0.1}}).value(), 0.2, 1e-15);
  EXPECT_FALSE(tnorm_exact({SignedTable(17, 0.0)}).has_value());
}

TEST(Tnorm, ExactMatchesGridAndUpperDominates) {
  auto rng = Stream(3).substream(0);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t m = 2 + static_cast<std::size_t>(inst % 3);
    std::vector<SignedTable> deltas(1 + inst % 5, SignedTable(m));
    for (auto& d : deltas) {
      double mean = 0.0;
      for (double& x : d) mean += x = rng.uniform() - 0.5;
      for (double& x : d) x -= mean / static_cast<double>(m);
    }
    const double exact = tnorm_exact(deltas).value();
    EXPECT_NEAR(exact, tnorm_grid(deltas), 1e-12);
    EXPECT_GE(tnorm_upper(deltas), exact - 1e-15);
  }
}

TEST(LocalErrorReport, SingleTrialDegenerates) {
  const auto r = make_local_error_report({0}, {{0.1, -0.1}});
  EXPECT_EQ(r.trials, 1u);
  ASSERT_EQ(r.per_trial.size(), 1u);
  EXPECT_NEAR(r.per_trial[0], 0.2, 1e-15);
  EXPECT_NEAR(r.estimate, 0.2, 1e-15);
  ASSERT_TRUE(r.exact.has_value());
  EXPECT_NEAR(*r.exact, 0.2, 1e-15);
}

TEST(MeasureError, LargeNTinyModel) {
  const LocalHMM m = random_local_hmm(build_chain(2, 1), {}, 3);
  const auto part = single_block(m.graph());
  const Configuration x0{0, 0};
  const auto obs = simulate(m, x0, 2, 1).observations;
  const auto r = measure_block_pf_error(m, part, x0, obs, {0}, 100000, 3, Stream(1));
  EXPECT_LT(r.estimate, 0.05);
  EXPECT_EQ(r.trials, 3u);
  EXPECT_THROW(measure_block_pf_error(m, singleton_blocks(m.graph()), x0, obs, {0, 1}, 10, 1, Stream(1)), UsageError);
}

TEST(MeasureError, InteriorNoWorseThanBoundary) {
  // Homogeneous chain with strong interaction, so the block bias is visible
  // above the Monte Carlo noise.
  RandomModelOptions opt;
  opt.mixing = 0.1;
  opt.homogeneous = true;
  const LocalHMM m = random_local_hmm(build_chain(12, 1), opt, 5);
  const auto part = build_chain_blocks(m.graph(), 4);
  const Configuration x0(12, 0);
  const auto obs = simulate(m, x0, 10, 7).observations;
  // Block {4,5,6,7}: 5 is interior, 4 sits on the boundary.
  const auto interior = measure_block_pf_error(m, part, x0, obs, {5}, 2000, 200, Stream(3));
  const auto boundary = measure_block_pf_error(m, part, x0, obs, {4}, 2000, 200, Stream(3));
  EXPECT_LE(interior.estimate, boundary.estimate);
}
