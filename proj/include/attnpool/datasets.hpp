#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnpool/graph.hpp"

namespace attnpool {

struct NodeRange {
  std::size_t lo = 4;
  std::size_t hi = 25;
};

struct ColorsConfig {
  std::size_t dim = 3;  // one-hot colour channels; the green channel is index 1
  std::size_t n_train = 500;
  std::size_t n_val = 2500;
  std::size_t n_test = 2500;
  NodeRange small{4, 25};
  NodeRange large{26, 200};
  std::size_t max_green = 10;
  double edge_prob = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrianglesConfig {
  std::size_t n_train = 30000;
  std::size_t n_val = 5000;
  std::size_t n_test = 5000;
  NodeRange small{4, 25};
  NodeRange large{26, 100};
  int min_label = 1;
  int max_label = 10;
  std::optional<std::size_t> degree_cap;  // default: max degree in train
  std::size_t attempts_per_graph = 5000;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrianglesConfig desk_scale(std::uint64_t seed);
};

struct TriangleStats {
  std::size_t total = 0;
  std::vector<std::size_t> per_node;
};

/// total = trace(A³)/6, per_node_i = (A³)_ii / 2.
TriangleStats count_triangles(const Matrix& adjacency);

/// A generated or loaded dataset: named splits plus shared metadata.
struct Dataset {
  std::string task;
  std::map<SplitName, DatasetSplit> splits;
  nlohmann::json metadata;  // config echo, palette, degree cap, seed, ...

  const DatasetSplit& at(SplitName s) const;
};

inline constexpr std::size_t kColorsGreenChannel = 1;
inline constexpr int kDatasetFormatVersion = 1;

/// Splits train, val, test-orig, test-large, test-largec. Each split draws
/// from its own (seed, split-name) stream.
Dataset gen_colors(const ColorsConfig& cfg);

/// Splits train, val, test-orig, test-large, stratified over labels.
Dataset gen_triangles(const TrianglesConfig& cfg);

/// Palette used for non-green nodes in a split (rows are colour vectors).
std::vector<std::vector<double>> colors_palette(std::size_t dim, bool unseen_colors);

// JSON Lines I/O: one metadata line, then one graph per line.

std::string split_filename(SplitName s);

/// Writes atomically. Triangles files omit features (derived on load from
/// metadata.degree_cap).
void save_split(const DatasetSplit& split, const nlohmann::json& metadata, const std::filesystem::path& path);

struct LoadedSplit {
  DatasetSplit split;
  nlohmann::json metadata;
};

/// Rejects malformed lines (with line number) and checksum mismatches.
LoadedSplit load_split(const std::filesystem::path& path);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Loads the requested splits (all present split files when empty).
Dataset load_dataset(const std::filesystem::path& dir, const std::vector<SplitName>& which = {});

/// Serialised graph line (no trailing newline), as written by save_split.
std::string graph_to_line(const Graph& g, bool include_features);
Graph graph_from_line(const std::string& line, std::optional<std::size_t> degree_cap);

/// Atomic text write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace attnpool
