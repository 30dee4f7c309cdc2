#pragma once

#include <compare>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnpool/matrix.hpp"

namespace attnpool {

/// Undirected edge stored with u < v.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  auto operator<=>(const Edge&) const = default;
};

/// One sample: structure, node features, integer label and optional
/// ground-truth node importance.
struct Graph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  Matrix features;  // n × C
  int label = 0;
  std::optional<std::vector<double>> gt_attention;

  std::size_t feature_dim() const { return features.cols(); }
  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

enum class SplitName { Train, Val, TestOrig, TestLarge, TestLargeC };

std::string to_string(SplitName s);
SplitName split_from_string(const std::string& s);

struct DatasetSplit {
  SplitName name = SplitName::Train;
  std::vector<Graph> graphs;
  std::size_t feature_dim = 0;
};

Matrix adjacency_dense(std::size_t n, std::span<const Edge> edges);
inline Matrix adjacency_dense(const Graph& g) { return adjacency_dense(g.n, g.edges); }

/// D̂^{-1/2}(A+I)D̂^{-1/2} with D̂ the degree of A+I.
Matrix gcn_norm(const Matrix& adjacency);

std::vector<double> degrees(const Matrix& adjacency);
std::vector<std::size_t> degrees(std::size_t n, std::span<const Edge> edges);

/// Row i is one-hot at min(degree_i, dmax).
Matrix degree_onehot(const Graph& g, std::size_t dmax);

/// Induced subgraph on `keep` (strictly ascending, non-empty). Features are
/// gathered and, when coeffs is given (length n), row i is scaled by
/// coeffs[i]. gt_attention rows are gathered without renormalisation.
Graph drop_nodes(const Graph& g, std::span<const std::size_t> keep,
                 std::optional<std::span<const double>> coeffs = std::nullopt);

/// drop_nodes with every node except i. Requires n ≥ 2.
Graph remove_single_node(const Graph& g, std::size_t i);

/// Edges of the subgraph induced by `keep`, relabelled by position in keep.
std::vector<Edge> induced_edges(std::size_t n, std::span<const Edge> edges,
                                std::span<const std::size_t> keep);

/// Structure-only view with lazily built dense propagation operators. Not
/// thread-safe; each worker builds its own.
class GraphOperators {
 public:
  GraphOperators(std::size_t n, std::vector<Edge> edges);
  explicit GraphOperators(const Graph& g) : GraphOperators(g.n, g.edges) {}

  std::size_t num_nodes() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::shared_ptr<const Matrix> adjacency() const;
  std::shared_ptr<const Matrix> gcn_normalized() const;
  /// D^{-1}A; rows of isolated nodes are zero.
  std::shared_ptr<const Matrix> mean_propagation() const;

  GraphOperators induced(std::span<const std::size_t> keep) const;

 private:
  std::size_t n_;
  std::vector<Edge> edges_;
  mutable std::shared_ptr<const Matrix> adjacency_;
  mutable std::shared_ptr<const Matrix> gcn_;
  mutable std::shared_ptr<const Matrix> mean_;
};

}  // namespace attnpool
