#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnpool/autodiff.hpp"
#include "attnpool/graph.hpp"
#include "attnpool/rng.hpp"

namespace attnpool {

/// Named, ordered parameter matrices owned by a model.
class ParamStore {
 public:
  std::size_t add(std::string name, Matrix init);

  std::size_t size() const { return values_.size(); }
  Matrix& at(std::size_t i) { return values_.at(i); }
  const Matrix& at(std::size_t i) const { return values_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// Every parameter of a store bound as a leaf on one tape.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ParamStore& store);
  ad::Var operator[](std::size_t i) const { return vars_.at(i); }
  std::size_t size() const { return vars_.size(); }
  /// Per-parameter gradients after tape.backward(), aligned with the store.
  std::vector<Matrix> gradients() const;

 private:
  std::vector<ad::Var> vars_;
};

enum class ConvKind { Gcn, Cheby, Gin, ChebyGin };
enum class Activation { Relu, None };
enum class Readout { Sum, Max };
enum class Aggregator { Mean, Sum };

std::string to_string(ConvKind k);
ConvKind conv_kind_from_string(const std::string& s);
std::string to_string(Readout r);
Readout readout_from_string(const std::string& s);

struct LayerSpec {
  ConvKind kind = ConvKind::Gin;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t K = 1;  // scales; meaningful for cheby / chebygin
  std::optional<std::size_t> mlp_hidden;
  Activation activation = Activation::Relu;

  void validate() const;
};

/// Parameter indices of an affine map x·W + b.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

/// W ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)); b = 0.
Linear make_linear(ParamStore& store, const std::string& prefix, std::size_t in_dim,
                   std::size_t out_dim, Rng& rng);
ad::Var apply_linear(const Linear& lin, const BoundParams& params, ad::Var x);

struct ConvLayer {
  LayerSpec spec;
  Linear first;
  std::optional<Linear> second;  // present iff the layer has a hidden MLP layer
};

ConvLayer make_conv(ParamStore& store, const std::string& prefix, const LayerSpec& spec, Rng& rng);
ad::Var conv_forward(const ConvLayer& layer, const BoundParams& params, const GraphOperators& graph,
                     ad::Var x);

// Individual layer forms, exposed for direct testing.

/// activation(Â·X·W + b)
ad::Var gcn_forward(ad::Var a_hat, ad::Var x, ad::Var weight, ad::Var bias, Activation act);

/// [X, P·X, P²·X, ...] over K scales with P = D⁻¹A. The sum aggregator
/// multiplies every scale after the first by the node degrees: [X, D·P·X, D·P²·X, ...].
ad::Var multiscale_stack(const GraphOperators& graph, ad::Var x, std::size_t K, Aggregator agg);

/// (A + I)·X
ad::Var gin_aggregate(const GraphOperators& graph, ad::Var x);

ad::Var readout(ad::Var x, Readout kind);

ad::Var activate(ad::Var x, Activation act);

}  // namespace attnpool
