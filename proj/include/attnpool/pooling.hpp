#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "attnpool/autodiff.hpp"
#include "attnpool/graph.hpp"

namespace attnpool {

enum class PoolMode { None, TopK, Threshold };

std::string to_string(PoolMode m);
PoolMode pool_mode_from_string(const std::string& s);

struct PoolSpec {
  PoolMode mode = PoolMode::None;
  double ratio = 1.0;        // top-k: kept fraction r in (0, 1]
  double alpha_tilde = 0.0;  // threshold: keep α_i > α̃, α̃ in [0, 1)
  /// Positions at which a pooling stage runs: 0 is the raw input, j is the
  /// output of conv layer j.
  std::vector<std::size_t> layers_after;

  void validate(std::size_t num_layers) const;
};

/// One pooling stage as seen by losses and evaluation. alpha refers to the
/// node set entering the stage.
struct AttentionOutput {
  std::vector<double> alpha_pre;
  std::vector<double> alpha;
  std::vector<std::size_t> kept;  // ascending
  Matrix z;                       // |kept| × C
  ad::Var alpha_var;              // n×1 on the forward tape
};

/// α_pre = X·p
ad::Var linear_attention(ad::Var x, ad::Var p);

/// Row i scaled by α_i.
ad::Var attend(ad::Var x, ad::Var alpha);

/// The ⌈r·N⌉ largest α (lower index wins ties), returned ascending.
std::vector<std::size_t> topk_indices(std::span<const double> alpha, double ratio);

/// {i : α_i > α̃}, or the single argmax (lowest index) when that is empty.
std::vector<std::size_t> threshold_indices(std::span<const double> alpha, double alpha_tilde);

/// ⌈r·N⌉ clamped to [1, N], robust to r·N landing a few ulps above an integer.
std::size_t topk_count(std::size_t n, double ratio);

struct PoolResult {
  AttentionOutput output;
  GraphOperators reduced;
  ad::Var z;
};

PoolResult topk_pool(const GraphOperators& graph, ad::Var x, ad::Var alpha, double ratio);
PoolResult threshold_pool(const GraphOperators& graph, ad::Var x, ad::Var alpha, double alpha_tilde);
PoolResult pool(const GraphOperators& graph, ad::Var x, ad::Var alpha, const PoolSpec& spec);

}  // namespace attnpool
