#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "attnpool/datasets.hpp"

using namespace attnpool;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("attnpool-test-" + std::to_string(::getpid()) + "-" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name() + "-" +
                                         std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

ColorsConfig small_colors(std::uint64_t seed) {
  ColorsConfig c;
  c.n_train = 40;
  c.n_val = 20;
  c.n_test = 20;
  c.seed = seed;
  return c;
}

TrianglesConfig small_triangles(std::uint64_t seed) {
  TrianglesConfig c;
  c.n_train = 103;
  c.n_val = 20;
  c.n_test = 20;
  c.seed = seed;
  return c;
}

Matrix complete(std::size_t n) {
  Matrix a(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 0.0;
  return a;
}

}  // namespace

TEST(Triangles, CompleteGraphK4) {
  const TriangleStats s = count_triangles(complete(4));
  EXPECT_EQ(s.total, 4u);
  EXPECT_EQ(s.per_node, (std::vector<std::size_t>{3, 3, 3, 3}));
}

TEST(Triangles, TreeHasNone) {
  const TriangleStats s = count_triangles(adjacency_dense(6, std::vector<Edge>{{0, 1}, {0, 2}, {1, 3}, {1, 4}, {2, 5}}));
  EXPECT_EQ(s.total, 0u);
  EXPECT_EQ(s.per_node, std::vector<std::size_t>(6, 0));
}

TEST(Triangles, InvalidAdjacencyIsInternalError) {
  Matrix a = complete(3);
  a(0, 1) = 0.5;
  EXPECT_THROW(count_triangles(a), std::logic_error);
}

TEST(Triangles, GeneratedSplitsAreStratifiedAndConsistent) {
  const Dataset ds = gen_triangles(small_triangles(7));
  for (const auto& [name, split] : ds.splits) {
    std::map<int, std::size_t> hist;
    for (const Graph& g : split.graphs) {
      ++hist[g.label];
      EXPECT_EQ(count_triangles(adjacency_dense(g)).total, static_cast<std::size_t>(g.label));
      ASSERT_TRUE(g.gt_attention);
      const TriangleStats st = count_triangles(adjacency_dense(g));
      double sum = 0.0;
      for (std::size_t i = 0; i < g.n; ++i) {
        sum += (*g.gt_attention)[i];
        EXPECT_EQ((*g.gt_attention)[i] == 0.0, st.per_node[i] == 0);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    ASSERT_EQ(hist.size(), 10u) << to_string(name);
    std::size_t lo = split.graphs.size(), hi = 0;
    for (const auto& [label, n] : hist) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    EXPECT_LE(hi - lo, 1u) << to_string(name);
  }
}

TEST(Triangles, DegreeFeaturesUseTrainCap) {
  const Dataset ds = gen_triangles(small_triangles(3));
  const std::size_t cap = ds.metadata["degree_cap"];
  std::size_t max_train = 0;
  for (const Graph& g : ds.at(SplitName::Train).graphs)
    for (std::size_t d : degrees(g.n, g.edges)) max_train = std::max(max_train, d);
  EXPECT_EQ(cap, max_train);
  for (const auto& [name, split] : ds.splits) EXPECT_EQ(split.feature_dim, cap + 1);
}

TEST(Triangles, BudgetExhaustionNamesStrata) {
  TrianglesConfig c = small_triangles(0);
  c.small = {4, 5};  // at most 10 triangles on 5 nodes, and only K5 has 10
  c.n_train = 50;
  c.attempts_per_graph = 3;
  try {
    gen_triangles(c);
    FAIL() << "expected budget exhaustion";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("strata"), std::string::npos) << e.what();
  }
}

TEST(Colors, GroundTruthIsUniformOverGreen) {
  const Dataset ds = gen_colors(small_colors(1));
  bool saw_four = false;
  for (const auto& [name, split] : ds.splits)
    for (const Graph& g : split.graphs) {
      std::size_t green = 0;
      for (std::size_t i = 0; i < g.n; ++i) green += g.features(i, kColorsGreenChannel) == 1.0;
      EXPECT_EQ(static_cast<std::size_t>(g.label), green);
      ASSERT_TRUE(g.gt_attention);
      for (std::size_t i = 0; i < g.n; ++i) {
        const bool is_green = g.features(i, kColorsGreenChannel) == 1.0;
        EXPECT_EQ((*g.gt_attention)[i], is_green ? 1.0 / static_cast<double>(green) : 0.0);
      }
      if (green == 4) {
        saw_four = true;
        for (std::size_t i = 0; i < g.n; ++i)
          if (g.features(i, kColorsGreenChannel) == 1.0) EXPECT_EQ((*g.gt_attention)[i], 0.25);
      }
    }
  EXPECT_TRUE(saw_four);
}

TEST(Colors, SplitSizesAndFeatureWidth) {
  ColorsConfig c = small_colors(2);
  const Dataset ds = gen_colors(c);
  EXPECT_EQ(ds.splits.size(), 5u);
  for (const auto& [name, split] : ds.splits) {
    EXPECT_EQ(split.feature_dim, c.dim + 1);
    const bool large = name == SplitName::TestLarge || name == SplitName::TestLargeC;
    for (const Graph& g : split.graphs) {
      EXPECT_GE(g.n, large ? 26u : 4u);
      EXPECT_LE(g.n, large ? 200u : 25u);
      EXPECT_LE(g.label, 10);
    }
  }
}

TEST(Colors, UnseenColoursOnlyInLargeC) {
  const Dataset ds = gen_colors(small_colors(4));
  for (const auto& [name, split] : ds.splits)
    for (const Graph& g : split.graphs)
      for (std::size_t i = 0; i < g.n; ++i) {
        const auto row = g.features.row(i);
        const double channels = std::accumulate(row.begin(), row.end(), 0.0);
        if (name != SplitName::TestLargeC) {
          EXPECT_EQ(channels, 1.0);
          EXPECT_EQ(row[3], 0.0);
        } else if (row[kColorsGreenChannel] == 1.0) {
          EXPECT_EQ(channels, 1.0);
        }
      }
}

TEST(Colors, PaletteSizes) {
  EXPECT_EQ(colors_palette(3, false).size(), 2u);
  const auto unseen = colors_palette(3, true);
  EXPECT_EQ(unseen.size() + 1, 9u);  // plus green: nine colours
  for (const auto& c : unseen) EXPECT_EQ(c[kColorsGreenChannel], 0.0);
  EXPECT_EQ(colors_palette(5, false).size(), 4u);
}

TEST(Colors, ConstantPredictorGetsAboutOneEleventh) {
  ColorsConfig c = small_colors(9);
  c.n_train = 10000;
  c.n_val = c.n_test = 0;
  const Dataset ds = gen_colors(c);
  std::map<int, std::size_t> hist;
  for (const Graph& g : ds.at(SplitName::Train).graphs) ++hist[g.label];
  ASSERT_EQ(hist.size(), 11u);
  // Green count is uniform on [0, min(10, N)], so small N tilts mass to low labels.
  for (const auto& [label, n] : hist) {
    EXPECT_GT(n, 10000 / 11 / 3) << label;
    EXPECT_LT(n, 10000 / 11 * 2) << label;
  }
}

TEST(Datasets, GenerationIsDeterministic) {
  TempDir a, b;
  save_dataset(gen_colors(small_colors(5)), a.path() / "c");
  save_dataset(gen_colors(small_colors(5)), b.path() / "c");
  save_dataset(gen_triangles(small_triangles(5)), a.path() / "t");
  save_dataset(gen_triangles(small_triangles(5)), b.path() / "t");
  for (const char* sub : {"c", "t"})
    for (const auto& entry : fs::directory_iterator(a.path() / sub))
      EXPECT_EQ(slurp(entry.path()), slurp(b.path() / sub / entry.path().filename())) << entry.path();
  EXPECT_NE(slurp(a.path() / "c" / "train.jsonl"), [] {
    TempDir c;
    save_dataset(gen_colors(small_colors(6)), c.path());
    return slurp(c.path() / "train.jsonl");
  }());
}

TEST(Datasets, RoundTripIsExact) {
  TempDir dir;
  for (const Dataset& ds : {gen_colors(small_colors(8)), gen_triangles(small_triangles(8))}) {
    save_dataset(ds, dir.path() / ds.task);
    const Dataset back = load_dataset(dir.path() / ds.task);
    EXPECT_EQ(back.task, ds.task);
    ASSERT_EQ(back.splits.size(), ds.splits.size());
    for (const auto& [name, split] : ds.splits) {
      const DatasetSplit& other = back.at(name);
      EXPECT_EQ(other.feature_dim, split.feature_dim);
      ASSERT_EQ(other.graphs.size(), split.graphs.size());
      for (std::size_t k = 0; k < split.graphs.size(); ++k) {
        const Graph& g = split.graphs[k];
        const Graph& h = other.graphs[k];
        EXPECT_EQ(g.n, h.n);
        EXPECT_EQ(g.edges, h.edges);
        EXPECT_EQ(g.features, h.features);
        EXPECT_EQ(g.label, h.label);
        EXPECT_EQ(g.gt_attention, h.gt_attention);
      }
    }
  }
}

TEST(Datasets, EmptySplitIsMetadataOnly) {
  TempDir dir;
  DatasetSplit empty;
  empty.feature_dim = 4;
  save_split(empty, {{"format_version", kDatasetFormatVersion}, {"task", "colors"}}, dir.path() / "train.jsonl");
  const std::string text = slurp(dir.path() / "train.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_TRUE(load_split(dir.path() / "train.jsonl").split.graphs.empty());
}

TEST(Datasets, MalformedLineReportsLineNumber) {
  TempDir dir;
  save_dataset(gen_colors(small_colors(1)), dir.path());
  const fs::path p = dir.path() / "val.jsonl";
  std::string text = slurp(p);
  std::size_t pos = 0;
  for (int line = 0; line < 3; ++line) pos = text.find('\n', pos) + 1;  // start of file line 4
  text.insert(pos, "{\"n\": oops\n");
  spit(p, text);
  try {
    load_split(p);
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("val.jsonl:4:"), std::string::npos) << e.what();
  }
}

TEST(Datasets, ChecksumMismatchRejected) {
  TempDir dir;
  save_dataset(gen_colors(small_colors(1)), dir.path());
  const fs::path p = dir.path() / "train.jsonl";
  std::string text = slurp(p);
  const auto pos = text.find("\"label\":", text.find('\n'));
  ASSERT_NE(pos, std::string::npos);
  // Relabel a graph with a still-valid value: only the checksum notices.
  char& digit = text[pos + 8];
  digit = digit == '1' ? '2' : '1';
  spit(p, text);
  try {
    load_split(p);
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
}

TEST(Datasets, TriangleLabelsReverifiedOnLoad) {
  TempDir dir;
  const Dataset ds = gen_triangles(small_triangles(2));
  DatasetSplit split = ds.at(SplitName::Val);
  split.graphs[0].label = split.graphs[0].label % 10 + 1;
  save_split(split, ds.metadata, dir.path() / "val.jsonl");
  EXPECT_THROW(load_split(dir.path() / "val.jsonl"), std::runtime_error);
}

TEST(Datasets, MixedTasksRejected) {
  TempDir dir;
  const Dataset c = gen_colors(small_colors(1));
  const Dataset t = gen_triangles(small_triangles(1));
  save_split(c.at(SplitName::Train), c.metadata, dir.path() / "train.jsonl");
  save_split(t.at(SplitName::Val), t.metadata, dir.path() / "val.jsonl");
  EXPECT_THROW(load_dataset(dir.path()), std::runtime_error);
}

TEST(Datasets, ThousandGraphSplitRoundTripsToSameHash) {
  TempDir dir;
  ColorsConfig c;
  c.n_train = 1000;
  c.n_val = c.n_test = 0;
  c.seed = 21;
  const Dataset ds = gen_colors(c);
  save_dataset(ds, dir.path() / "a");
  const Dataset back = load_dataset(dir.path() / "a", {SplitName::Train});
  save_dataset(back, dir.path() / "b");
  EXPECT_EQ(slurp(dir.path() / "a" / "train.jsonl"), slurp(dir.path() / "b" / "train.jsonl"));
  EXPECT_EQ(back.at(SplitName::Train).graphs.size(), 1000u);
}

TEST(Triangles, DeskScaleGenerationIsQuick) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds = gen_triangles(TrianglesConfig::desk_scale(0));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::size_t total = 0;
  for (const auto& [name, split] : ds.splits) total += split.graphs.size();
  EXPECT_EQ(total, 8000u);  // 5000 train, 1000 val, 1000 in each test subset
  EXPECT_LT(secs, 300.0);
}
