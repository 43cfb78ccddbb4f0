#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "blockpf/errors.hpp"
#include "blockpf/graph.hpp"
#include "blockpf/model.hpp"
#include "blockpf/rng.hpp"
#include "oracles.hpp"

using namespace blockpf;

TEST(Philox, KnownAnswerVectors) {
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (Philox4x32Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (Philox4x32Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (Philox4x32Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Stream, ChildrenAreDistinctAndReproducible) {
  const Stream s(7);
  EXPECT_EQ(s.child(1).id(), Stream(7).child(1).id());
  EXPECT_NE(s.child(1).id(), s.child(2).id());
  EXPECT_NE(s.child({1, 2}).id(), s.child({2, 1}).id());
  auto a = s.substream(3);
  auto b = s.substream(3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a(), b());
  double sum = 0.0;
  auto u = s.substream(0);
  for (int i = 0; i < 20000; ++i) sum += u.uniform();
  EXPECT_NEAR(sum / 20000, 0.5, 0.01);
}

TEST(Lattice, Examples) {
  const auto path = build_lattice(1, 2, 1);
  EXPECT_EQ(path.vertex_count(), 5u);
  EXPECT_EQ(path.max_neighborhood(), 3u);
  const auto grid = build_lattice(2, 1, 1);
  EXPECT_EQ(grid.vertex_count(), 9u);
  EXPECT_LE(grid.max_neighborhood(), 9u);
  EXPECT_EQ(grid.max_neighborhood(), 5u);
  const auto point = build_lattice(1, 0, 1);
  EXPECT_EQ(point.vertex_count(), 1u);
  EXPECT_EQ(point.max_neighborhood(), 1u);
}

TEST(Lattice, DistanceIsL1OnCoordinates) {
  for (int q : {1, 2, 3}) {
    const auto g = build_lattice(q, 2, 1);
    for (Vertex a = 0; a < g.vertex_count(); ++a) {
      for (Vertex b = 0; b < g.vertex_count(); ++b) {
        const auto ca = g.coordinates(a);
        const auto cb = g.coordinates(b);
        int l1 = 0;
        for (int i = 0; i < q; ++i) l1 += std::abs(ca[i] - cb[i]);
        ASSERT_EQ(g.distance(a, b), l1);
      }
    }
  }
}

TEST(Lattice, NeighbourhoodRadius) {
  const auto g = build_lattice(2, 2, 2);
  for (Vertex v = 0; v < g.vertex_count(); ++v) {
    for (Vertex u = 0; u < g.vertex_count(); ++u) {
      const auto& nb = g.neighborhood(v);
      const bool in = std::find(nb.begin(), nb.end(), u) != nb.end();
      EXPECT_EQ(in, g.distance(u, v) <= 2);
    }
  }
  EXPECT_LE(g.max_neighborhood(), 25u);
}

TEST(BlockCover, Examples) {
  const auto g5 = build_lattice(1, 2, 1);
  const auto whole = build_block_cover(g5, 1, 2, 2);
  EXPECT_EQ(whole.block_count(), 1u);
  EXPECT_TRUE(whole.inner_boundary(0).empty());

  const auto g9 = build_lattice(1, 4, 1);
  const auto three = build_block_cover(g9, 1, 4, 1);
  ASSERT_EQ(three.block_count(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(three.block(k).size(), 3u);
  EXPECT_EQ(three.inner_boundary(1), (VertexSet{3, 5}));

  const auto sq = build_lattice(2, 1, 1);
  const auto one = build_block_cover(sq, 2, 1, 1);
  EXPECT_EQ(one.block_count(), 1u);
  EXPECT_EQ(one.max_block_size(), 9u);
}

TEST(BlockCover, RejectsIndivisibleAndRelaxedAllowsRagged) {
  const auto g = build_lattice(1, 3, 1);
  EXPECT_THROW(build_block_cover(g, 1, 3, 1), ConfigError);
  const auto p = build_block_cover_relaxed(g, 1, 3, 1);
  EXPECT_TRUE(p.ragged());
  std::size_t covered = 0;
  for (const auto& b : p.blocks()) covered += b.size();
  EXPECT_EQ(covered, 7u);
}

TEST(Partition, ArbitraryExamples) {
  const auto path = build_chain(4, 1);
  const auto p = build_partition_arbitrary(path, {{0, 1}, {2, 3}});
  EXPECT_EQ(p.max_block_neighbors(), 2u);
  const auto whole = single_block(path);
  EXPECT_TRUE(whole.inner_boundary(0).empty());
  EXPECT_EQ(whole.max_block_neighbors(), 1u);
  EXPECT_THROW(build_partition_arbitrary(path, {{0}, {0, 1}}), ValidationError);
  EXPECT_THROW(build_partition_arbitrary(path, {{0, 1}, {2}}), ValidationError);
  EXPECT_THROW(build_partition_arbitrary(path, {{0, 1}, {2, 3, 9}}), ValidationError);
  try {
    build_partition_arbitrary(path, {{0, 1}, {1, 2, 3}});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("vertex 1"), std::string::npos);
  }
}

TEST(Partition, InnerBoundaryMatchesDefinition) {
  const auto g = build_chain(12, 1);
  const auto p = build_chain_blocks(g, 4);
  for (std::size_t k = 0; k < p.block_count(); ++k) {
    VertexSet expected;
    for (Vertex v : p.block(k)) {
      for (Vertex u : g.neighborhood(v)) {
        if (p.block_of(u) != k) {
          expected.push_back(v);
          break;
        }
      }
    }
    EXPECT_EQ(p.inner_boundary(k), expected);
  }
}

namespace {

LocalHMM two_state_single(double stay, double hit) {
  return LocalHMM(build_chain(1, 1), {2}, {2}, {{stay, 1 - stay, 1 - stay, stay}}, {{hit, 1 - hit, 1 - hit, hit}});
}

}  // namespace

TEST(Model, RowNormalization) {
  EXPECT_NO_THROW(LocalHMM(build_chain(1, 1), {2}, {2}, {{0.5 + 1e-13, 0.5, 0.5, 0.5}}, {{0.5, 0.5, 0.5, 0.5}}));
  try {
    LocalHMM(build_chain(1, 1), {2}, {2}, {{0.5, 0.4, 0.5, 0.5}}, {{0.5, 0.5, 0.5, 0.5}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("trans[0] row 0"), std::string::npos);
  }
  EXPECT_THROW(LocalHMM(build_chain(1, 1), {2}, {2}, {{1.0, 0.0, 0.5, 0.5}}, {{0.5, 0.5, 0.5, 0.5}}), ConfigError);
  EXPECT_NO_THROW(LocalHMM(build_chain(1, 1), {2}, {2}, {{1.0, 0.0, 0.5, 0.5}}, {{0.5, 0.5, 0.5, 0.5}},
                           Positivity::kAllowZero));
  EXPECT_THROW(LocalHMM(build_chain(2, 1), {2}, {2, 2}, {{0.5}}, {{0.5}}), ConfigError);
}

TEST(Model, ProductModelFactorizes) {
  const LocalHMM base = two_state_single(0.8, 0.7);
  const LocalHMM same = build_product_model(base, 1);
  EXPECT_EQ(same.trans_table(0), base.trans_table(0));
  EXPECT_EQ(same.obs_table(0), base.obs_table(0));

  const LocalHMM prod = build_product_model(base, 3);
  const auto p = oracle::joint_kernel(prod);
  for (std::size_t a = 0; a < p.size(); ++a) {
    const auto x = oracle::decode(prod, a);
    for (std::size_t b = 0; b < p.size(); ++b) {
      const auto z = oracle::decode(prod, b);
      double expected = 1.0;
      for (int i = 0; i < 3; ++i) expected *= base.trans_table(0)[static_cast<std::size_t>(x[i] * 2 + z[i])];
      ASSERT_NEAR(p[a][b], expected, 1e-15);
    }
  }
  const double kappa = base.kappa_bounds().first;
  for (int y0 = 0; y0 < 2; ++y0) {
    const auto g = oracle::likelihood(prod, {y0, 1 - y0, y0});
    for (double gi : g) {
      EXPECT_GE(gi, std::pow(kappa, 3) - 1e-15);
      EXPECT_LE(gi, std::pow(kappa, -3));
    }
  }
}

TEST(Simulate, Basics) {
  const LocalHMM m = random_local_hmm(build_chain(3, 1), {}, 5);
  const auto t0 = simulate(m, {0, 1, 0}, 0, 1);
  ASSERT_EQ(t0.states.size(), 1u);
  EXPECT_EQ(t0.states[0], (Configuration{0, 1, 0}));
  EXPECT_TRUE(t0.observations.empty());

  const auto a = simulate(m, {0, 0, 0}, 20, 9);
  const auto b = simulate(m, {0, 0, 0}, 20, 9);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.observations, b.observations);
}

TEST(Simulate, DeterministicOrbit) {
  // Each vertex copies its left neighbour (vertex 0 flips).
  const auto g = build_chain(3, 1);
  std::vector<std::vector<double>> trans(3);
  for (Vertex v = 0; v < 3; ++v) {
    const auto& nb = g.neighborhood(v);
    std::size_t rows = 1;
    for (Vertex u : nb) rows *= 2;
    for (std::size_t row = 0; row < rows; ++row) {
      std::vector<int> vals(nb.size());
      std::size_t r = row;
      for (std::size_t i = nb.size(); i-- > 0;) {
        vals[i] = static_cast<int>(r % 2);
        r /= 2;
      }
      int next = 0;
      if (v == 0) {
        next = 1 - vals[0];
      } else {
        next = vals[0];  // N(v) ascending: first entry is v-1
      }
      trans[v].push_back(next == 0 ? 1.0 : 0.0);
      trans[v].push_back(next == 1 ? 1.0 : 0.0);
    }
  }
  const LocalHMM m(g, {2, 2, 2}, {2, 2, 2}, trans, {{0.6, 0.4, 0.4, 0.6}, {0.6, 0.4, 0.4, 0.6}, {0.6, 0.4, 0.4, 0.6}},
                   Positivity::kAllowZero);
  const auto t = simulate(m, {0, 0, 0}, 6, 3);
  Configuration x{0, 0, 0};
  for (std::size_t k = 1; k <= 6; ++k) {
    x = {1 - x[0], x[0], x[1]};
    EXPECT_EQ(t.states[k], x);
  }
}

TEST(Simulate, EmpiricalTransitionsMatchTable) {
  const LocalHMM m = random_local_hmm(build_chain(1, 1), {3, 2, 0.2, 0.3, false}, 11);
  const std::size_t steps = 100000;
  const auto t = simulate(m, {0}, steps, 4);
  std::vector<std::vector<double>> counts(3, std::vector<double>(3, 0.0));
  std::vector<double> from(3, 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    counts[t.states[k][0]][t.states[k + 1][0]] += 1;
    from[t.states[k][0]] += 1;
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double p = m.trans_table(0)[static_cast<std::size_t>(a * 3 + b)];
      const double se = std::sqrt(p * (1 - p) / from[a]);
      EXPECT_NEAR(counts[a][b] / from[a], p, 3 * se + 1e-12);
    }
  }
}
