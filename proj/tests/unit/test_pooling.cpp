#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "attnpool/model.hpp"
#include "attnpool/pooling.hpp"

using namespace attnpool;

namespace {

using Idx = std::vector<std::size_t>;

Graph colour_graph() {
  // Rows are one-hot colours; nodes 1 and 3 are green.
  Graph g;
  g.n = 4;
  g.edges = {{0, 1}, {1, 2}, {2, 3}};
  g.features = Matrix(4, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0});
  return g;
}

ModelConfig small_colors(PoolMode mode) {
  ModelConfig m;
  m.in_dim = 3;
  m.filters = {8, 8};
  m.mlp_hidden = 8;
  m.pool.mode = mode;
  if (mode != PoolMode::None) m.pool.layers_after = {0};
  return m;
}

}  // namespace

TEST(LinearAttention, GreenProjection) {
  ad::Tape t;
  Matrix p(3, 1, std::vector<double>{0, 1, 0});
  const Matrix pre = linear_attention(t.constant(colour_graph().features), t.constant(p)).value();
  EXPECT_EQ(pre.values(), (std::vector<double>{0, 1, 0, 1}));
}

TEST(LinearAttention, ZeroProjectionGivesUniformAlpha) {
  ad::Tape t;
  auto alpha = ad::softmax_vector(linear_attention(t.constant(colour_graph().features), t.constant(Matrix(3, 1))));
  for (double a : alpha.value().values()) EXPECT_DOUBLE_EQ(a, 0.25);
}

TEST(LinearAttention, ShapeMismatchRejected) {
  ad::Tape t;
  EXPECT_THROW(linear_attention(t.constant(Matrix(4, 3)), t.constant(Matrix(2, 1))), std::invalid_argument);
}

TEST(Attend, OneHotKeepsOneRow) {
  ad::Tape t;
  Matrix x(3, 2, 1.0), a(3, 1, std::vector<double>{0, 1, 0});
  const Matrix z = attend(t.constant(x), t.constant(a)).value();
  EXPECT_EQ(z, Matrix(3, 2, std::vector<double>{0, 0, 1, 1, 0, 0}));
}

TEST(Attend, UniformScalesByInverseN) {
  ad::Tape t;
  Matrix x(4, 1, std::vector<double>{4, 8, 12, 16}), a(4, 1, 0.25);
  EXPECT_EQ(attend(t.constant(x), t.constant(a)).value().values(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Attend, LengthMismatchRejected) {
  ad::Tape t;
  EXPECT_THROW(attend(t.constant(Matrix(3, 2)), t.constant(Matrix(2, 1))), std::invalid_argument);
}

TEST(TopK, FullRatioKeepsEverything) {
  std::vector<double> alpha{0.1, 0.5, 0.4};
  EXPECT_EQ(topk_indices(alpha, 1.0), (Idx{0, 1, 2}));
}

TEST(TopK, HalfOfFour) {
  std::vector<double> alpha{0.4, 0.3, 0.2, 0.1};
  EXPECT_EQ(topk_indices(alpha, 0.5), (Idx{0, 1}));
}

TEST(TopK, CeilingAndTies) {
  EXPECT_EQ(topk_count(10, 0.97), 10u);
  EXPECT_EQ(topk_count(7, 0.3), 3u);
  EXPECT_EQ(topk_count(10, 0.3), 3u);  // 0.3·10 is 3.0000000000000004 in floating point
  EXPECT_EQ(topk_count(3, 0.01), 1u);
  std::vector<double> tied{0.2, 0.3, 0.2, 0.3};
  EXPECT_EQ(topk_indices(tied, 0.75), (Idx{0, 1, 3}));
}

TEST(Threshold, ZeroKeepsEverything) {
  std::vector<double> alpha{0.1, 0.6, 0.3};
  EXPECT_EQ(threshold_indices(alpha, 0.0), (Idx{0, 1, 2}));
}

TEST(Threshold, DominantNode) {
  std::vector<double> alpha{0.7, 0.1, 0.1, 0.1};
  EXPECT_EQ(threshold_indices(alpha, 0.5), (Idx{0}));
}

TEST(Threshold, EmptySetFallsBackToFirstArgmax) {
  std::vector<double> alpha(4, 0.25);
  EXPECT_EQ(threshold_indices(alpha, 0.25), (Idx{0}));
}

TEST(Pool, ReducesGraphAndScalesRows) {
  ad::Tape t;
  GraphOperators ops(4, {{0, 1}, {1, 2}, {2, 3}});
  Matrix x(4, 1, std::vector<double>{1, 2, 3, 4});
  Matrix a(4, 1, std::vector<double>{0.1, 0.5, 0.1, 0.3});
  PoolResult r = threshold_pool(ops, t.constant(x), t.constant(a), 0.2);
  EXPECT_EQ(r.output.kept, (Idx{1, 3}));
  EXPECT_EQ(r.z.value().values(), (std::vector<double>{2 * 0.5, 4 * 0.3}));
  EXPECT_EQ(r.reduced.num_nodes(), 2u);
  EXPECT_TRUE(r.reduced.edges().empty());
}

TEST(PoolSpec, Validation) {
  PoolSpec s;
  s.mode = PoolMode::TopK;
  s.ratio = 0.0;
  s.layers_after = {0};
  EXPECT_THROW(s.validate(2), std::invalid_argument);
  s.ratio = 0.5;
  s.layers_after = {2, 1};
  EXPECT_THROW(s.validate(2), std::invalid_argument);
  s.layers_after = {3};
  EXPECT_THROW(s.validate(2), std::invalid_argument);
  s.layers_after = {1, 2};
  EXPECT_NO_THROW(s.validate(2));
}

TEST(Model, SingleNodeGraphHasUnitAttention) {
  Model m(small_colors(PoolMode::Threshold), 1);
  Graph g;
  g.n = 1;
  g.features = Matrix(1, 3, std::vector<double>{0, 1, 0});
  const auto [y, stages] = m.predict_with_attention(g);
  ASSERT_EQ(stages.size(), 1u);
  EXPECT_EQ(stages[0].alpha, (std::vector<double>{1.0}));
  EXPECT_TRUE(std::isfinite(y));
}

TEST(Model, TopKWithFullRatioMatchesPlainStackWithUniformAttention) {
  // With p = 0, α = 1/N everywhere: same as the global-pool model on X/N.
  ModelConfig cfg = small_colors(PoolMode::TopK);
  cfg.pool.ratio = 1.0;
  Model pooled(cfg, 3);
  pooled.params().at(*pooled.params().find("attn1.p")) = Matrix(3, 1);
  ModelConfig plain_cfg = small_colors(PoolMode::None);
  ParamStore plain_params;
  Model probe(plain_cfg, 3);
  for (std::size_t i = 0; i < probe.params().size(); ++i)
    plain_params.add(probe.params().name(i), pooled.params().at(*pooled.params().find(probe.params().name(i))));
  Model plain(plain_cfg, plain_params);
  Graph g = colour_graph();
  Graph scaled = g;
  for (double& v : scaled.features.values()) v /= 4.0;
  EXPECT_NEAR(pooled.predict(g), plain.predict(scaled), 1e-12);
}

TEST(Model, NoPoolingHasNoStages) {
  Model m(small_colors(PoolMode::None), 0);
  EXPECT_FALSE(m.has_pooling());
  EXPECT_TRUE(m.predict_with_attention(colour_graph()).second.empty());
}

TEST(Model, FeatureWidthMismatchRejected) {
  Model m(small_colors(PoolMode::None), 0);
  Graph g = colour_graph();
  g.features = Matrix(4, 5);
  EXPECT_THROW(m.predict(g), std::invalid_argument);
}

TEST(Model, ConfigJsonRoundTrip) {
  ModelConfig cfg = small_colors(PoolMode::Threshold);
  cfg.pool.alpha_tilde = 0.05;
  const ModelConfig back = ModelConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  nlohmann::json j = cfg.to_json();
  j["surprise"] = 1;
  EXPECT_THROW(ModelConfig::from_json(j), std::invalid_argument);
}

TEST(Model, GnnAttentionAtLaterPositions) {
  ModelConfig cfg;
  cfg.task = "triangles";
  cfg.in_dim = 5;
  cfg.conv = ConvKind::ChebyGin;
  cfg.K = 3;
  cfg.filters = {6, 6, 6};
  cfg.mlp_hidden = 4;
  cfg.readout = Readout::Max;
  cfg.attention = AttentionKind::Gnn;
  cfg.pool.mode = PoolMode::TopK;
  cfg.pool.ratio = 0.5;
  cfg.pool.layers_after = {1, 2};
  Model m(cfg, 9);
  Graph g;
  g.n = 8;
  for (std::size_t i = 0; i + 1 < 8; ++i) g.edges.push_back({i, i + 1});
  g.features = Matrix(8, 5, 0.2);
  const auto [y, stages] = m.predict_with_attention(g);
  ASSERT_EQ(stages.size(), 2u);
  EXPECT_EQ(stages[0].alpha.size(), 8u);
  EXPECT_EQ(stages[0].kept.size(), 4u);
  EXPECT_EQ(stages[1].alpha.size(), 4u);
  EXPECT_EQ(stages[1].kept.size(), 2u);
}

TEST(Model, OptimalProjectionKeepsOnlyGreenNodes) {
  // 25 nodes, greens at 3 and 17, p = green selector: α_green = e/(2e + 23) ≈ 0.096,
  // every other node 1/(2e + 23) ≈ 0.035, so α̃ = 0.05 separates them.
  ModelConfig cfg;
  cfg.in_dim = 4;
  cfg.filters = {8, 8};
  cfg.mlp_hidden = 8;
  cfg.pool.mode = PoolMode::Threshold;
  cfg.pool.alpha_tilde = 0.05;
  cfg.pool.layers_after = {0};
  Model m(cfg, 5);
  m.params().at(*m.params().find("attn1.p")) = Matrix::column({0, 1, 0, 0});
  Graph g;
  g.n = 25;
  for (std::size_t i = 0; i + 1 < 25; ++i) g.edges.push_back({i, i + 1});
  g.features = Matrix(25, 4);
  for (std::size_t i = 0; i < 25; ++i) g.features(i, i % 2 == 0 ? 0 : 2) = 1.0;
  for (std::size_t i : {3u, 17u}) {
    g.features(i, 0) = g.features(i, 2) = 0.0;
    g.features(i, 1) = 1.0;
  }
  const auto stages = m.predict_with_attention(g).second;
  ASSERT_EQ(stages.size(), 1u);
  EXPECT_EQ(stages[0].kept, (Idx{3, 17}));
  const double e = std::exp(1.0);
  EXPECT_NEAR(stages[0].alpha[3], e / (2 * e + 23), 1e-12);
  EXPECT_NEAR(stages[0].alpha[0], 1 / (2 * e + 23), 1e-12);
}
