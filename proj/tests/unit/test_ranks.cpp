#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "tpm/error.hpp"
#include "tpm/ranks.hpp"

namespace tpm {
namespace {

std::vector<double> iota_values(int n, double first = 1.0) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(first + i);
  return v;
}

TEST(BuildScale, LinearInterpolationQuantiles) {
  const auto scale = build_scale(iota_values(8), 4);
  const std::vector<double> expected{1, 2.75, 4.5, 6.25, 8};
  ASSERT_EQ(scale.boundaries().size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    EXPECT_DOUBLE_EQ(scale.boundaries()[k], expected[k]);
  }
}

TEST(BuildScale, TwoPointsGiveMidpointMedian) {
  const std::vector<double> t{0, 10};
  const auto scale = build_scale(t, 2);
  EXPECT_EQ(std::vector<double>(scale.boundaries().begin(),
                                scale.boundaries().end()),
            (std::vector<double>{0, 5, 10}));
}

TEST(BuildScale, ConstantLabelsRejected) {
  const std::vector<double> t{5, 5, 5, 5};
  try {
    build_scale(t, 2);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient label diversity"),
              std::string::npos);
  }
}

TEST(BuildScale, RejectsBadInputs) {
  const std::vector<double> t{1, 2, 3};
  EXPECT_THROW(build_scale(t, 1), Error);
  EXPECT_THROW(build_scale(std::vector<double>{}, 2), Error);
  EXPECT_THROW(build_scale(std::vector<double>{1, -2, 3}, 2), Error);
  EXPECT_THROW(
      build_scale(std::vector<double>{1, std::nan(""), 3}, 2), Error);
}

TEST(BuildScale, HeavyTiesNudgedToStrictOrder) {
  // Mostly zeros with a few distinct values: quantiles collide at 0.
  std::vector<double> t(100, 0.0);
  t[97] = 1.0;
  t[98] = 2.0;
  t[99] = 3.0;
  const auto scale = build_scale(t, 4);
  const auto b = scale.boundaries();
  ASSERT_EQ(b.size(), 5u);
  for (std::size_t k = 1; k < b.size(); ++k) EXPECT_LT(b[k - 1], b[k]);
  EXPECT_EQ(b.front(), 0.0);
  EXPECT_EQ(b.back(), 3.0);
}

TEST(BuildScale, CoversTrainingRange) {
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> dist(0.1);
  std::vector<double> t(500);
  for (auto& v : t) v = dist(rng);
  const auto scale = build_scale(t, 32);
  EXPECT_LE(scale.lower(), *std::min_element(t.begin(), t.end()));
  EXPECT_GE(scale.upper(), *std::max_element(t.begin(), t.end()));
}

TEST(OrdinalScale, RejectsNonIncreasingBoundaries) {
  EXPECT_THROW(OrdinalScale({0, 1, 1, 2}), Error);
  EXPECT_THROW(OrdinalScale({0, 2, 1}), Error);
  EXPECT_THROW(OrdinalScale({0, 1}), Error);
}

TEST(BalancedTree, FourLeaves) {
  const auto tree = build_balanced_tree(OrdinalScale({0, 1, 2, 3, 4}));
  ASSERT_EQ(tree.nodes().size(), 7u);
  EXPECT_EQ(tree.num_heads(), 3u);
  const auto& root = tree.nodes()[tree.root()];
  EXPECT_EQ(root.start, 0u);
  EXPECT_EQ(root.end, 4u);
  const auto& left = tree.nodes()[root.children->first];
  const auto& right = tree.nodes()[root.children->second];
  EXPECT_EQ(left.start, 0u);
  EXPECT_EQ(left.end, 2u);
  EXPECT_EQ(right.start, 2u);
  EXPECT_EQ(right.end, 4u);
}

TEST(BalancedTree, TwoLeaves) {
  const auto tree = build_balanced_tree(OrdinalScale({0, 1, 2}));
  EXPECT_EQ(tree.nodes().size(), 3u);
  EXPECT_EQ(tree.num_heads(), 1u);
}

TEST(BalancedTree, ThreeLeavesLeftTakesCeilHalf) {
  const auto tree = build_balanced_tree(OrdinalScale({0, 1, 2, 3}));
  EXPECT_EQ(tree.num_heads(), 2u);
  const auto& root = tree.nodes()[tree.root()];
  const auto& left = tree.nodes()[root.children->first];
  const auto& right = tree.nodes()[root.children->second];
  EXPECT_EQ(left.start, 0u);
  EXPECT_EQ(left.end, 2u);
  EXPECT_EQ(right.start, 2u);
  EXPECT_EQ(right.end, 3u);
}

TEST(BalancedTree, HeadsAreBreadthFirst) {
  const auto tree = build_balanced_tree(OrdinalScale({0, 1, 2, 3, 4, 5, 6, 7, 8}));
  // Breadth-first node order and head order coincide on internal nodes.
  std::size_t expected = 0;
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) continue;
    EXPECT_EQ(*node.head, expected++);
  }
}

TEST(BalancedTree, PowerOfTwoLeavesAtEqualDepth) {
  for (std::size_t m : {2u, 4u, 8u, 16u, 32u, 64u}) {
    std::vector<double> b;
    for (std::size_t k = 0; k <= m; ++k) b.push_back(static_cast<double>(k));
    const auto tree = build_balanced_tree(OrdinalScale(b));
    const auto depth = static_cast<std::size_t>(std::log2(m));
    for (std::size_t k = 0; k < m; ++k) EXPECT_EQ(tree.path(k).size(), depth);
  }
}

TEST(LinearTree, FourLeavesSpine) {
  const auto tree = build_linear_tree(OrdinalScale({0, 1, 2, 3, 4}));
  EXPECT_EQ(tree.num_heads(), 3u);
  EXPECT_EQ(tree.path(0).size(), 1u);
  EXPECT_EQ(tree.path(1).size(), 2u);
  EXPECT_EQ(tree.path(2).size(), 3u);
  EXPECT_EQ(tree.path(3).size(), 3u);
}

TEST(LinearTree, TwoLeavesMatchBalanced) {
  const OrdinalScale s({0, 1, 2});
  const auto a = build_linear_tree(s);
  const auto b = build_balanced_tree(s);
  ASSERT_EQ(a.nodes().size(), b.nodes().size());
  for (std::size_t i = 0; i < a.nodes().size(); ++i) {
    EXPECT_EQ(a.nodes()[i], b.nodes()[i]);
  }
}

TEST(LinearTree, ThreeLeaves) {
  const auto tree = build_linear_tree(OrdinalScale({0, 1, 2, 3}));
  const auto& root = tree.nodes()[tree.root()];
  const auto& left = tree.nodes()[root.children->first];
  const auto& right = tree.nodes()[root.children->second];
  EXPECT_EQ(left.start, 0u);
  EXPECT_EQ(left.end, 1u);
  EXPECT_EQ(right.start, 1u);
  EXPECT_EQ(right.end, 3u);
  const auto& rl = tree.nodes()[right.children->first];
  const auto& rr = tree.nodes()[right.children->second];
  EXPECT_EQ(rl.start, 1u);
  EXPECT_EQ(rl.end, 2u);
  EXPECT_EQ(rr.start, 2u);
  EXPECT_EQ(rr.end, 3u);
}

TEST(LeafOf, IntervalMembershipAndClamping) {
  const OrdinalScale scale({1, 2.75, 4.5, 6.25, 8});
  const auto tree = build_balanced_tree(scale);
  EXPECT_EQ(leaf_of(scale, tree, 3.0), 1u);
  EXPECT_EQ(leaf_of(scale, tree, 4.5), 2u);
  EXPECT_EQ(leaf_of(scale, tree, 100.0), 3u);
  EXPECT_EQ(leaf_of(scale, tree, 8.0), 3u);
  EXPECT_EQ(leaf_of(scale, tree, 0.0), 0u);
  EXPECT_THROW(leaf_of(scale, tree, std::nan("")), Error);
}

TEST(PathAndLabels, ExtremeLeaves) {
  const auto tree = build_balanced_tree(OrdinalScale({0, 1, 2, 3, 4}));
  const auto& root = tree.nodes()[tree.root()];
  const auto left_head = *tree.nodes()[root.children->first].head;
  const auto right_head = *tree.nodes()[root.children->second].head;
  EXPECT_EQ(path_and_labels(tree, 3),
            (std::vector<PathStep>{{*root.head, 1}, {right_head, 1}}));
  EXPECT_EQ(path_and_labels(tree, 0),
            (std::vector<PathStep>{{*root.head, 0}, {left_head, 0}}));
}

TEST(PathAndLabels, UnitIntervalExampleIsPositiveAtHeadsZeroAndTwo) {
  // Four ranks over [0, 1]; a watch time of 0.8 lands in the last one.
  const OrdinalScale scale({0, 0.2, 0.4, 0.6, 1.0});
  const auto tree = build_balanced_tree(scale);
  const auto path = path_and_labels(tree, leaf_of(scale, tree, 0.8));
  EXPECT_EQ(path, (std::vector<PathStep>{{0, 1}, {2, 1}}));
}

class TreeProperties : public ::testing::TestWithParam<TreeKind> {};

TEST_P(TreeProperties, HoldForAllSizes) {
  std::mt19937_64 rng(11);
  for (std::size_t m = 2; m <= 64; ++m) {
    const auto tree = build_tree(testing::random_scale(rng, m), GetParam());
    const auto& scale = tree.scale();

    // Leaves tile the leaf index range exactly once, in order.
    std::vector<int> covered(m, 0);
    for (const auto& node : tree.nodes()) {
      if (node.is_leaf()) {
        ++covered[node.start];
        EXPECT_EQ(*node.leaf_midpoint, scale.midpoint(node.start));
      } else {
        const auto& l = tree.nodes()[node.children->first];
        const auto& r = tree.nodes()[node.children->second];
        EXPECT_EQ(l.start, node.start);
        EXPECT_EQ(l.end, r.start);
        EXPECT_EQ(r.end, node.end);
      }
    }
    for (int c : covered) EXPECT_EQ(c, 1);

    // Unique head indices 0..m-2.
    std::set<std::size_t> heads;
    for (const auto& node : tree.nodes()) {
      if (node.head) heads.insert(*node.head);
    }
    EXPECT_EQ(heads.size(), m - 1);
    EXPECT_EQ(*heads.rbegin(), m - 2);

    // Paths are injective and midpoints map back to their leaf.
    std::set<std::vector<std::pair<std::size_t, int>>> paths;
    for (std::size_t k = 0; k < m; ++k) {
      std::vector<std::pair<std::size_t, int>> p;
      for (const auto& step : path_and_labels(tree, k)) {
        p.emplace_back(step.head, step.label);
      }
      paths.insert(p);
      EXPECT_EQ(leaf_of(scale, tree, scale.midpoint(k)), k);
    }
    EXPECT_EQ(paths.size(), m);
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, TreeProperties,
                         ::testing::Values(TreeKind::kBalanced,
                                           TreeKind::kLinear),
                         [](const auto& info) {
                           return std::string(to_string(info.param));
                         });

TEST(BalancedTree, QuantileScaleSplitsLabelsEvenly) {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> dist(2.0, 0.8);
  std::vector<double> t(4096);
  for (auto& v : t) v = dist(rng);
  const auto tree = build_balanced_tree(build_scale(t, 16));
  std::vector<double> positives(tree.num_heads(), 0.0);
  std::vector<double> seen(tree.num_heads(), 0.0);
  for (double v : t) {
    for (const auto& step : tree.path(leaf_of(tree.scale(), tree, v))) {
      seen[step.head] += 1.0;
      positives[step.head] += step.label;
    }
  }
  for (std::size_t h = 0; h < positives.size(); ++h) {
    EXPECT_NEAR(positives[h] / seen[h], 0.5, 0.02) << "head " << h;
  }
}

TEST(DecompositionTree, RejectsBrokenStructure) {
  const OrdinalScale scale({0, 1, 2});
  std::vector<TreeNode> nodes(3);
  nodes[0] = {0, 2, std::pair<std::size_t, std::size_t>{1, 2}, 0, std::nullopt};
  nodes[1] = {0, 1, std::nullopt, std::nullopt, 0.5};
  nodes[2] = {1, 2, std::nullopt, std::nullopt, 1.5};
  EXPECT_NO_THROW(DecompositionTree(scale, TreeKind::kBalanced, nodes, 0));

  auto bad_head = nodes;
  bad_head[0].head = 5;
  EXPECT_THROW(DecompositionTree(scale, TreeKind::kBalanced, bad_head, 0), Error);

  auto bad_midpoint = nodes;
  bad_midpoint[1].leaf_midpoint = 0.7;
  EXPECT_THROW(DecompositionTree(scale, TreeKind::kBalanced, bad_midpoint, 0),
               Error);

  auto bad_span = nodes;
  bad_span[2].start = 0;
  EXPECT_THROW(DecompositionTree(scale, TreeKind::kBalanced, bad_span, 0), Error);
}

TEST(EmpiricalLeafMeans, AveragesPerLeafAndKeepsMidpointWhenEmpty) {
  const OrdinalScale scale({0, 10, 20, 30});
  const auto tree = build_balanced_tree(scale);
  const std::vector<double> t{1, 3, 12, 14, 16};
  const auto means = empirical_leaf_means(tree, t);
  EXPECT_DOUBLE_EQ(means[0], 2.0);
  EXPECT_DOUBLE_EQ(means[1], 14.0);
  EXPECT_DOUBLE_EQ(means[2], 25.0);
}

TEST(SetLeafValues, MustStayInsideIntervals) {
  auto tree = build_balanced_tree(OrdinalScale({0, 10, 20}));
  EXPECT_NO_THROW(tree.set_leaf_values({2.0, 19.0}));
  EXPECT_THROW(tree.set_leaf_values({12.0, 19.0}), Error);
  EXPECT_THROW(tree.set_leaf_values({2.0}), Error);
}

}  // namespace
}  // namespace tpm
