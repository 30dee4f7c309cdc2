#include <gtest/gtest.h>

#include <stdexcept>
#include <vector>

#include "attnpool/graph.hpp"

using namespace attnpool;

namespace {

Graph make(std::size_t n, std::vector<Edge> edges, std::size_t feature_dim = 1) {
  Graph g;
  g.n = n;
  g.edges = std::move(edges);
  g.features = Matrix(n, feature_dim);
  for (std::size_t i = 0; i < n; ++i) g.features(i, 0) = static_cast<double>(i);
  return g;
}

Graph triangle() { return make(3, {{0, 1}, {0, 2}, {1, 2}}); }
Graph star4() { return make(4, {{0, 1}, {0, 2}, {0, 3}}); }

}  // namespace

TEST(Adjacency, Triangle) {
  const Matrix a = adjacency_dense(triangle());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a(i, j), i == j ? 0.0 : 1.0);
}

TEST(Adjacency, Edgeless) { EXPECT_EQ(adjacency_dense(make(3, {})), Matrix(3, 3)); }

TEST(GcnNorm, IsolatedNode) { EXPECT_EQ(gcn_norm(Matrix(1, 1)), Matrix(1, 1, 1.0)); }

TEST(GcnNorm, SingleEdge) {
  const Matrix a_hat = gcn_norm(adjacency_dense(make(2, {{0, 1}})));
  for (double v : a_hat.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Degrees, TriangleAndStar) {
  EXPECT_EQ(degrees(3, triangle().edges), (std::vector<std::size_t>{2, 2, 2}));
  EXPECT_EQ(degrees(4, star4().edges), (std::vector<std::size_t>{3, 1, 1, 1}));
  EXPECT_EQ(degrees(adjacency_dense(star4())), (std::vector<double>{3, 1, 1, 1}));
}

TEST(DegreeOnehot, IsolatedNode) {
  const Matrix f = degree_onehot(make(1, {}), 3);
  EXPECT_EQ(f, Matrix(1, 4, std::vector<double>{1, 0, 0, 0}));
}

TEST(DegreeOnehot, ClampsToTopBin) {
  Graph star6 = make(6, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}});
  const Matrix f = degree_onehot(star6, 3);
  EXPECT_EQ(std::vector<double>(f.row(0).begin(), f.row(0).end()), (std::vector<double>{0, 0, 0, 1}));
  EXPECT_EQ(std::vector<double>(f.row(1).begin(), f.row(1).end()), (std::vector<double>{0, 1, 0, 0}));
}

TEST(DropNodes, KeepAllIsIdentity) {
  Graph g = triangle();
  g.gt_attention = std::vector<double>{0.2, 0.3, 0.5};
  std::vector<std::size_t> keep{0, 1, 2};
  const Graph d = drop_nodes(g, keep);
  EXPECT_EQ(d.n, g.n);
  EXPECT_EQ(d.edges, g.edges);
  EXPECT_EQ(d.features, g.features);
  EXPECT_EQ(d.gt_attention, g.gt_attention);
}

TEST(DropNodes, PathEndpoints) {
  Graph path = make(3, {{0, 1}, {1, 2}});
  std::vector<std::size_t> keep{0, 2};
  const Graph d = drop_nodes(path, keep);
  EXPECT_EQ(d.n, 2u);
  EXPECT_TRUE(d.edges.empty());
  EXPECT_EQ(d.features(1, 0), 2.0);
}

TEST(DropNodes, CoefficientsScaleRows) {
  Graph g = triangle();
  std::vector<std::size_t> keep{1, 2};
  std::vector<double> coeffs{10, 0.5, 2};
  const Graph d = drop_nodes(g, keep, std::span<const double>(coeffs));
  EXPECT_EQ(d.features(0, 0), 0.5);
  EXPECT_EQ(d.features(1, 0), 4.0);
}

TEST(DropNodes, EmptyKeepRejected) {
  std::vector<std::size_t> keep;
  EXPECT_THROW(drop_nodes(triangle(), keep), std::invalid_argument);
}

TEST(RemoveSingleNode, TriangleLeavesEdge) {
  const Graph d = remove_single_node(triangle(), 2);
  EXPECT_EQ(d.n, 2u);
  EXPECT_EQ(d.edges, (std::vector<Edge>{{0, 1}}));
}

TEST(RemoveSingleNode, StarCenterLeavesEdgeless) {
  const Graph d = remove_single_node(star4(), 0);
  EXPECT_EQ(d.n, 3u);
  EXPECT_TRUE(d.edges.empty());
}

TEST(RemoveSingleNode, SingleNodeRejected) { EXPECT_THROW(remove_single_node(make(1, {}), 0), std::invalid_argument); }

TEST(Validate, RejectsBadStructure) {
  EXPECT_THROW(make(3, {{0, 3}}).validate(), std::invalid_argument);
  EXPECT_THROW(make(3, {{1, 0}}).validate(), std::invalid_argument);
  EXPECT_THROW(make(3, {{0, 1}, {0, 1}}).validate(), std::invalid_argument);
  EXPECT_THROW(make(3, {{1, 1}}).validate(), std::invalid_argument);
  Graph g = triangle();
  g.gt_attention = std::vector<double>{0.5, 0.5};
  EXPECT_THROW(g.validate(), std::invalid_argument);
  EXPECT_NO_THROW(triangle().validate());
}

TEST(GraphOperators, InducedMatchesDropNodes) {
  Graph g = make(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}});
  std::vector<std::size_t> keep{1, 3, 4};
  GraphOperators ops(g);
  const GraphOperators sub = ops.induced(keep);
  EXPECT_EQ(sub.edges(), drop_nodes(g, keep).edges);
  EXPECT_EQ(*sub.adjacency(), adjacency_dense(drop_nodes(g, keep)));
}

TEST(GraphOperators, MeanPropagationRowsOfIsolatedNodesAreZero) {
  GraphOperators ops(3, {{0, 1}});
  const Matrix& p = *ops.mean_propagation();
  EXPECT_EQ(p(0, 1), 1.0);
  EXPECT_EQ(p(2, 0) + p(2, 1) + p(2, 2), 0.0);
}

TEST(SplitName, RoundTrip) {
  for (SplitName s : {SplitName::Train, SplitName::Val, SplitName::TestOrig, SplitName::TestLarge, SplitName::TestLargeC})
    EXPECT_EQ(split_from_string(to_string(s)), s);
  EXPECT_THROW(split_from_string("test"), std::invalid_argument);
}
