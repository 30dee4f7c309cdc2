#include "attnpool/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace attnpool {

void Graph::validate() const {
  for (const Edge& e : edges) {
    if (e.u >= e.v) throw std::invalid_argument("graph: edge must satisfy u < v");
    if (e.v >= n) throw std::invalid_argument("graph: edge endpoint " + std::to_string(e.v) + " ≥ n=" + std::to_string(n));
  }
  for (std::size_t k = 1; k < edges.size(); ++k)
    if (!(edges[k - 1] < edges[k])) throw std::invalid_argument("graph: edges must be sorted and unique");
  if (features.rows() != n)
    throw std::invalid_argument("graph: feature rows " + std::to_string(features.rows()) + " ≠ n=" + std::to_string(n));
  if (gt_attention) {
    if (gt_attention->size() != n) throw std::invalid_argument("graph: gt_attention length ≠ n");
    double s = 0.0;
    for (double a : *gt_attention) {
      if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("graph: gt_attention entries must be finite and ≥ 0");
      s += a;
    }
    if (s != 0.0 && std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("graph: gt_attention must sum to 1 or be all zero");
  }
}

std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Val: return "val";
    case SplitName::TestOrig: return "test-orig";
    case SplitName::TestLarge: return "test-large";
    case SplitName::TestLargeC: return "test-largec";
  }
  return "?";
}

SplitName split_from_string(const std::string& s) {
  if (s == "train") return SplitName::Train;
  if (s == "val") return SplitName::Val;
  if (s == "test-orig") return SplitName::TestOrig;
  if (s == "test-large") return SplitName::TestLarge;
  if (s == "test-largec") return SplitName::TestLargeC;
  throw std::invalid_argument("unknown split name '" + s + "'");
}

Matrix adjacency_dense(std::size_t n, std::span<const Edge> edges) {
  Matrix a(n, n);
  for (const Edge& e : edges) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

Matrix gcn_norm(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (std::size_t j = 0; j < n; ++j) d += adjacency(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adjacency(i, j) + (i == j ? 1.0 : 0.0);
      if (a != 0.0) out(i, j) = inv_sqrt[i] * a * inv_sqrt[j];
    }
  return out;
}

std::vector<double> degrees(const Matrix& adjacency) {
  std::vector<double> d(adjacency.rows(), 0.0);
  for (std::size_t i = 0; i < adjacency.rows(); ++i)
    for (double v : adjacency.row(i)) d[i] += v;
  return d;
}

std::vector<std::size_t> degrees(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::size_t> d(n, 0);
  for (const Edge& e : edges) {
    ++d[e.u];
    ++d[e.v];
  }
  return d;
}

Matrix degree_onehot(const Graph& g, std::size_t dmax) {
  const auto deg = degrees(g.n, g.edges);
  Matrix out(g.n, dmax + 1);
  for (std::size_t i = 0; i < g.n; ++i) out(i, std::min(deg[i], dmax)) = 1.0;
  return out;
}

std::vector<Edge> induced_edges(std::size_t n, std::span<const Edge> edges,
                                std::span<const std::size_t> keep) {
  constexpr std::size_t kDropped = static_cast<std::size_t>(-1);
  std::vector<std::size_t> remap(n, kDropped);
  for (std::size_t k = 0; k < keep.size(); ++k) remap[keep[k]] = k;
  std::vector<Edge> out;
  for (const Edge& e : edges) {
    const std::size_t u = remap[e.u];
    const std::size_t v = remap[e.v];
    if (u != kDropped && v != kDropped) out.push_back({u, v});
  }
  return out;
}

namespace {
void check_keep(std::size_t n, std::span<const std::size_t> keep) {
  if (keep.empty()) throw std::invalid_argument("drop_nodes: keep list is empty");
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] >= n) throw std::out_of_range("drop_nodes: index " + std::to_string(keep[k]) + " ≥ n");
    if (k > 0 && keep[k] <= keep[k - 1]) throw std::invalid_argument("drop_nodes: keep must be strictly ascending");
  }
}
}  // namespace

Graph drop_nodes(const Graph& g, std::span<const std::size_t> keep,
                 std::optional<std::span<const double>> coeffs) {
  check_keep(g.n, keep);
  if (coeffs && coeffs->size() != g.n) throw std::invalid_argument("drop_nodes: coeffs length ≠ n");
  Graph out;
  out.n = keep.size();
  out.edges = induced_edges(g.n, g.edges, keep);
  out.label = g.label;
  out.features = Matrix(keep.size(), g.features.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    auto src = g.features.row(keep[k]);
    auto dst = out.features.row(k);
    const double s = coeffs ? (*coeffs)[keep[k]] : 1.0;
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = s * src[c];
  }
  if (g.gt_attention) {
    std::vector<double> gt(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) gt[k] = (*g.gt_attention)[keep[k]];
    out.gt_attention = std::move(gt);
  }
  return out;
}

Graph remove_single_node(const Graph& g, std::size_t i) {
  if (g.n < 2) throw std::invalid_argument("remove_single_node: graph has a single node");
  if (i >= g.n) throw std::out_of_range("remove_single_node: index out of range");
  std::vector<std::size_t> keep;
  keep.reserve(g.n - 1);
  for (std::size_t k = 0; k < g.n; ++k)
    if (k != i) keep.push_back(k);
  return drop_nodes(g, keep);
}

// ---------------------------------------------------------------------------

GraphOperators::GraphOperators(std::size_t n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {}

std::shared_ptr<const Matrix> GraphOperators::adjacency() const {
  if (!adjacency_) adjacency_ = std::make_shared<const Matrix>(adjacency_dense(n_, edges_));
  return adjacency_;
}

std::shared_ptr<const Matrix> GraphOperators::gcn_normalized() const {
  if (!gcn_) gcn_ = std::make_shared<const Matrix>(gcn_norm(*adjacency()));
  return gcn_;
}

std::shared_ptr<const Matrix> GraphOperators::mean_propagation() const {
  if (!mean_) {
    const auto deg = degrees(n_, edges_);
    Matrix p(n_, n_);
    for (const Edge& e : edges_) {
      p(e.u, e.v) = 1.0 / static_cast<double>(deg[e.u]);
      p(e.v, e.u) = 1.0 / static_cast<double>(deg[e.v]);
    }
    mean_ = std::make_shared<const Matrix>(std::move(p));
  }
  return mean_;
}

GraphOperators GraphOperators::induced(std::span<const std::size_t> keep) const {
  check_keep(n_, keep);
  return GraphOperators(keep.size(), induced_edges(n_, edges_, keep));
}

}  // namespace attnpool
