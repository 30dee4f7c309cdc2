#include "attnpool/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace attnpool {

std::string to_string(PoolMode m) {
  switch (m) {
    case PoolMode::None: return "none";
    case PoolMode::TopK: return "topk";
    case PoolMode::Threshold: return "threshold";
  }
  return "?";
}

PoolMode pool_mode_from_string(const std::string& s) {
  if (s == "none") return PoolMode::None;
  if (s == "topk") return PoolMode::TopK;
  if (s == "threshold") return PoolMode::Threshold;
  throw std::invalid_argument("unknown pooling '" + s + "' (expected none|topk|threshold)");
}

void PoolSpec::validate(std::size_t num_layers) const {
  if (mode == PoolMode::None) return;
  if (mode == PoolMode::TopK && !(ratio > 0.0 && ratio <= 1.0))
    throw std::invalid_argument("pooling: ratio must lie in (0, 1]");
  if (mode == PoolMode::Threshold && !(alpha_tilde >= 0.0 && alpha_tilde < 1.0))
    throw std::invalid_argument("pooling: alpha_tilde must lie in [0, 1)");
  if (layers_after.empty()) throw std::invalid_argument("pooling: no pooling positions given");
  for (std::size_t k = 0; k < layers_after.size(); ++k) {
    if (layers_after[k] > num_layers)
      throw std::invalid_argument("pooling: position " + std::to_string(layers_after[k]) + " beyond last layer");
    if (k > 0 && layers_after[k] <= layers_after[k - 1])
      throw std::invalid_argument("pooling: positions must be strictly increasing");
  }
}

ad::Var linear_attention(ad::Var x, ad::Var p) {
  if (p.cols() != 1 || p.rows() != x.cols())
    throw std::invalid_argument("linear_attention: projection " + p.value().shape_string() +
                                " does not match features " + x.value().shape_string());
  return ad::matmul(x, p);
}

ad::Var attend(ad::Var x, ad::Var alpha) {
  if (alpha.cols() != 1 || alpha.rows() != x.rows())
    throw std::invalid_argument("attend: alpha " + alpha.value().shape_string() + " vs features " +
                                x.value().shape_string());
  return ad::mul(x, alpha);
}

std::size_t topk_count(std::size_t n, double ratio) {
  const double raw = ratio * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<std::size_t> topk_indices(std::span<const double> alpha, double ratio) {
  if (alpha.empty()) throw std::invalid_argument("topk: empty attention vector");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("topk: ratio must lie in (0, 1]");
  const std::size_t k = topk_count(alpha.size(), ratio);
  std::vector<std::size_t> order(alpha.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> threshold_indices(std::span<const double> alpha, double alpha_tilde) {
  if (alpha.empty()) throw std::invalid_argument("threshold: empty attention vector");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    if (alpha[i] > alpha_tilde) kept.push_back(i);
  if (kept.empty()) {
    const auto best = std::max_element(alpha.begin(), alpha.end());
    kept.push_back(static_cast<std::size_t>(best - alpha.begin()));
  }
  return kept;
}

namespace {

PoolResult finish(const GraphOperators& graph, ad::Var x, ad::Var alpha, std::vector<std::size_t> kept) {
  if (x.rows() != graph.num_nodes()) throw std::invalid_argument("pool: feature rows ≠ node count");
  ad::Var z = attend(ad::select_rows(x, kept), ad::select_rows(alpha, kept));
  AttentionOutput out;
  out.alpha = alpha.value().values();
  out.kept = std::move(kept);
  out.z = z.value();
  out.alpha_var = alpha;
  GraphOperators reduced = graph.induced(out.kept);
  return PoolResult{std::move(out), std::move(reduced), z};
}

}  // namespace

PoolResult topk_pool(const GraphOperators& graph, ad::Var x, ad::Var alpha, double ratio) {
  return finish(graph, x, alpha, topk_indices(alpha.value().values(), ratio));
}

PoolResult threshold_pool(const GraphOperators& graph, ad::Var x, ad::Var alpha, double alpha_tilde) {
  if (!(alpha_tilde >= 0.0 && alpha_tilde < 1.0)) throw std::invalid_argument("threshold: alpha_tilde must lie in [0, 1)");
  return finish(graph, x, alpha, threshold_indices(alpha.value().values(), alpha_tilde));
}

PoolResult pool(const GraphOperators& graph, ad::Var x, ad::Var alpha, const PoolSpec& spec) {
  switch (spec.mode) {
    case PoolMode::TopK: return topk_pool(graph, x, alpha, spec.ratio);
    case PoolMode::Threshold: return threshold_pool(graph, x, alpha, spec.alpha_tilde);
    case PoolMode::None: break;
  }
  throw std::logic_error("pool: mode none has no pooling stage");
}

}  // namespace attnpool
