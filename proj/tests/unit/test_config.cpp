#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "attnpool/checkpoint.hpp"
#include "attnpool/config.hpp"

using namespace attnpool;
using nlohmann::json;
namespace fs = std::filesystem;

TEST(Experiment, ColorsThresholdDefaults) {
  const auto c = ExperimentConfig::from_json(
      {{"task", "colors"}, {"model", "gin"}, {"pooling", "threshold"}, {"supervision", "gt"}});
  EXPECT_EQ(c.model.filters, (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(c.model.readout, Readout::Sum);
  EXPECT_EQ(c.model.mlp_hidden, std::optional<std::size_t>(256));
  EXPECT_EQ(c.model.attention, AttentionKind::LinearProjection);
  EXPECT_EQ(c.model.pool.layers_after, (std::vector<std::size_t>{0}));
  EXPECT_DOUBLE_EQ(c.model.pool.alpha_tilde, 0.05);
  EXPECT_DOUBLE_EQ(c.train.beta, 100.0);
  EXPECT_EQ(c.train.epochs, 300u);
  EXPECT_EQ(c.train.decay_epochs, (std::vector<std::size_t>{280}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0}));
  EXPECT_TRUE(c.in_dim_from_data);
}

TEST(Experiment, TrianglesDefaults) {
  const auto c = ExperimentConfig::from_json(
      {{"task", "triangles"}, {"model", "chebygin"}, {"pooling", "topk"}, {"supervision", "gt"}});
  EXPECT_EQ(c.model.filters.size(), 3u);
  EXPECT_EQ(c.model.readout, Readout::Max);
  EXPECT_EQ(c.model.K, 7u);
  EXPECT_EQ(c.model.attention, AttentionKind::Gnn);
  EXPECT_EQ(c.model.pool.layers_after, (std::vector<std::size_t>{1, 2}));
  EXPECT_DOUBLE_EQ(c.model.pool.ratio, 0.97);
  EXPECT_EQ(c.train.decay_epochs, (std::vector<std::size_t>{85, 95}));
}

TEST(Experiment, CustomEpochsKeepFittingDecayPoints) {
  const auto c = ExperimentConfig::from_json({{"task", "colors"}, {"model", "gin"}, {"epochs", 50}});
  EXPECT_EQ(c.train.epochs, 50u);
  EXPECT_TRUE(c.train.decay_epochs.empty());
}

TEST(Experiment, RejectsKeysThatDoNotApply) {
  const json base = {{"task", "colors"}, {"model", "gin"}};
  auto with = [&](const char* k, json v) {
    json j = base;
    j[k] = std::move(v);
    return j;
  };
  EXPECT_THROW(ExperimentConfig::from_json(with("K", 3)), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("alpha_tilde", 0.1)), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("beta", 10)), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("supervision", "gt")), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("typo", 1)), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("seeds", json::array())), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(with("task", "mnist")), std::invalid_argument);
  json topk = with("pooling", "topk");
  topk["alpha_tilde"] = 0.1;
  EXPECT_THROW(ExperimentConfig::from_json(topk), std::invalid_argument);
  json gcn = base;
  gcn["model"] = "gcn";
  gcn["mlp_hidden"] = 8;
  EXPECT_THROW(ExperimentConfig::from_json(gcn), std::invalid_argument);
}

TEST(Experiment, WeakNeedsExactlyOneSource) {
  json j = {{"task", "colors"}, {"model", "gin"}, {"pooling", "threshold"}, {"supervision", "weak"}};
  EXPECT_THROW(ExperimentConfig::from_json(j), std::invalid_argument);
  j["teacher"] = {{"epochs", 20}};
  const auto c = ExperimentConfig::from_json(j);
  ASSERT_TRUE(c.weak.teacher);
  EXPECT_EQ(c.weak.teacher->epochs, 20u);
  EXPECT_EQ(c.weak.teacher->supervision, Supervision::None);
  EXPECT_EQ(c.teacher_model().pool.mode, PoolMode::None);
  j["weak_labels"] = "w.json";
  EXPECT_THROW(ExperimentConfig::from_json(j), std::invalid_argument);
}

TEST(Experiment, LoadReportsPathOnBadJson) {
  const fs::path p = fs::temp_directory_path() / ("attnpool-cfg-" + std::to_string(::getpid()) + ".json");
  std::ofstream(p) << "{\"task\": ";
  try {
    load_experiment(p.string());
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(p.string()), std::string::npos);
  }
  fs::remove(p);
  EXPECT_THROW(load_experiment(p.string()), std::runtime_error);
}

TEST(Checkpoint, RoundTripIsExact) {
  ModelConfig m;
  m.task = "triangles";
  m.in_dim = 5;
  m.conv = ConvKind::ChebyGin;
  m.K = 3;
  m.filters = {6, 6};
  m.mlp_hidden = 4;
  m.attention = AttentionKind::Gnn;
  m.pool.mode = PoolMode::TopK;
  m.pool.ratio = 0.5;
  m.pool.layers_after = {1};
  const Model model(m, 11);
  const fs::path p = fs::temp_directory_path() / ("attnpool-ckpt-" + std::to_string(::getpid()) + ".json");
  save_checkpoint(model, p, {{"epoch", 3}});
  const Model back = load_checkpoint(p);
  fs::remove(p);
  EXPECT_EQ(back.config().to_json(), model.config().to_json());
  ASSERT_EQ(back.params().size(), model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    EXPECT_EQ(back.params().name(i), model.params().name(i));
    EXPECT_EQ(back.params().at(i), model.params().at(i));
  }
}

TEST(Checkpoint, RejectsWrongVersionAndShapes) {
  ModelConfig m;
  m.filters = {4};
  m.mlp_hidden = 4;
  json j = checkpoint_to_json(Model(m, 0));
  json bad_version = j;
  bad_version["format_version"] = kCheckpointFormatVersion + 1;
  EXPECT_ANY_THROW(model_from_checkpoint(bad_version));
  json bad_shape = j;
  auto& first = *bad_shape["params"].begin();
  first["shape"][0] = first["shape"][0].get<int>() + 1;
  EXPECT_ANY_THROW(model_from_checkpoint(bad_shape));
}

TEST(Recipes, EveryShippedRecipeParses) {
  std::size_t count = 0;
  for (const auto& e : fs::recursive_directory_iterator(ATTNPOOL_RECIPES_DIR)) {
    if (e.path().extension() != ".json") continue;
    ++count;
    EXPECT_NO_THROW(load_experiment(e.path().string())) << e.path();
  }
  EXPECT_EQ(count, 28u);
}
