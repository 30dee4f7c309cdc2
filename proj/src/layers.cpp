#include "attnpool/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace attnpool {

std::size_t ParamStore::add(std::string name, Matrix init) {
  if (find(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const Matrix& m : values_) n += m.size();
  return n;
}

BoundParams::BoundParams(ad::Tape& tape, const ParamStore& store) {
  vars_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) vars_.push_back(tape.parameter(store.at(i)));
}

std::vector<Matrix> BoundParams::gradients() const {
  std::vector<Matrix> out;
  out.reserve(vars_.size());
  for (const ad::Var& v : vars_) out.push_back(v.grad());
  return out;
}

std::string to_string(ConvKind k) {
  switch (k) {
    case ConvKind::Gcn: return "gcn";
    case ConvKind::Cheby: return "cheby";
    case ConvKind::Gin: return "gin";
    case ConvKind::ChebyGin: return "chebygin";
  }
  return "?";
}

ConvKind conv_kind_from_string(const std::string& s) {
  if (s == "gcn") return ConvKind::Gcn;
  if (s == "cheby") return ConvKind::Cheby;
  if (s == "gin") return ConvKind::Gin;
  if (s == "chebygin") return ConvKind::ChebyGin;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected gcn|cheby|gin|chebygin)");
}

std::string to_string(Readout r) { return r == Readout::Sum ? "sum" : "max"; }

Readout readout_from_string(const std::string& s) {
  if (s == "sum") return Readout::Sum;
  if (s == "max") return Readout::Max;
  throw std::invalid_argument("unknown readout '" + s + "' (expected sum|max)");
}

void LayerSpec::validate() const {
  if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("LayerSpec: zero width");
  const bool multiscale = kind == ConvKind::Cheby || kind == ConvKind::ChebyGin;
  if (multiscale && K < 1) throw std::invalid_argument("LayerSpec: K must be ≥ 1");
  if (!multiscale && K != 1) throw std::invalid_argument("LayerSpec: K applies to cheby/chebygin only");
  if (kind == ConvKind::Gin && !mlp_hidden) throw std::invalid_argument("LayerSpec: gin needs mlp_hidden");
  if ((kind == ConvKind::Gcn || kind == ConvKind::Cheby) && mlp_hidden)
    throw std::invalid_argument("LayerSpec: " + to_string(kind) + " has no hidden MLP layer");
  if (mlp_hidden && *mlp_hidden == 0) throw std::invalid_argument("LayerSpec: mlp_hidden must be positive");
}

Linear make_linear(ParamStore& store, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
                   Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  Matrix w(in_dim, out_dim);
  for (double& x : w.values()) x = rng.uniform(-a, a);
  Linear lin;
  lin.in_dim = in_dim;
  lin.out_dim = out_dim;
  lin.weight = store.add(prefix + ".weight", std::move(w));
  lin.bias = store.add(prefix + ".bias", Matrix(1, out_dim));
  return lin;
}

ad::Var apply_linear(const Linear& lin, const BoundParams& params, ad::Var x) {
  if (x.cols() != lin.in_dim)
    throw std::invalid_argument("linear: input width " + std::to_string(x.cols()) + " ≠ " +
                                std::to_string(lin.in_dim));
  return ad::add(ad::matmul(x, params[lin.weight]), params[lin.bias]);
}

ad::Var activate(ad::Var x, Activation act) { return act == Activation::Relu ? ad::relu(x) : x; }

ConvLayer make_conv(ParamStore& store, const std::string& prefix, const LayerSpec& spec, Rng& rng) {
  spec.validate();
  ConvLayer layer;
  layer.spec = spec;
  const std::size_t width = (spec.kind == ConvKind::Cheby || spec.kind == ConvKind::ChebyGin)
                                ? spec.K * spec.in_dim
                                : spec.in_dim;
  if (spec.mlp_hidden) {
    layer.first = make_linear(store, prefix + ".mlp0", width, *spec.mlp_hidden, rng);
    layer.second = make_linear(store, prefix + ".mlp1", *spec.mlp_hidden, spec.out_dim, rng);
  } else {
    layer.first = make_linear(store, prefix, width, spec.out_dim, rng);
  }
  return layer;
}

ad::Var gcn_forward(ad::Var a_hat, ad::Var x, ad::Var weight, ad::Var bias, Activation act) {
  return activate(ad::add(ad::matmul(ad::matmul(a_hat, x), weight), bias), act);
}

ad::Var multiscale_stack(const GraphOperators& graph, ad::Var x, std::size_t K, Aggregator agg) {
  if (K < 1) throw std::invalid_argument("multiscale_stack: K must be ≥ 1");
  if (x.rows() != graph.num_nodes())
    throw std::invalid_argument("multiscale_stack: feature rows ≠ node count");
  if (K == 1) return x;
  ad::Tape& tape = *x.tape();
  ad::Var prop = tape.constant(graph.mean_propagation());
  std::vector<ad::Var> blocks{x};
  ad::Var mean = x;
  ad::Var deg;
  if (agg == Aggregator::Sum) {
    Matrix d(graph.num_nodes(), 1);
    const Matrix& a = *graph.adjacency();
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) d(i, 0) += a(i, j);
    deg = tape.constant(std::move(d));
  }
  for (std::size_t k = 1; k < K; ++k) {
    mean = ad::matmul(prop, mean);
    blocks.push_back(agg == Aggregator::Sum ? ad::mul(deg, mean) : mean);
  }
  return ad::concat_cols(blocks);
}

ad::Var gin_aggregate(const GraphOperators& graph, ad::Var x) {
  if (x.rows() != graph.num_nodes()) throw std::invalid_argument("gin: feature rows ≠ node count");
  ad::Var adj = x.tape()->constant(graph.adjacency());
  return ad::add(ad::matmul(adj, x), x);
}

ad::Var readout(ad::Var x, Readout kind) {
  if (x.rows() == 0) throw std::invalid_argument("readout: empty node set");
  return kind == Readout::Sum ? ad::sum_over_rows(x) : ad::max_over_rows(x);
}

ad::Var conv_forward(const ConvLayer& layer, const BoundParams& params, const GraphOperators& graph,
                     ad::Var x) {
  const LayerSpec& s = layer.spec;
  if (x.cols() != s.in_dim)
    throw std::invalid_argument(to_string(s.kind) + " layer: input width " + std::to_string(x.cols()) +
                                " ≠ " + std::to_string(s.in_dim));
  if (x.rows() != graph.num_nodes())
    throw std::invalid_argument(to_string(s.kind) + " layer: feature rows ≠ node count");
  ad::Var h;
  switch (s.kind) {
    case ConvKind::Gcn: {
      ad::Var a_hat = x.tape()->constant(graph.gcn_normalized());
      return gcn_forward(a_hat, x, params[layer.first.weight], params[layer.first.bias], s.activation);
    }
    case ConvKind::Cheby:
      h = multiscale_stack(graph, x, s.K, Aggregator::Mean);
      break;
    case ConvKind::Gin:
      h = gin_aggregate(graph, x);
      break;
    case ConvKind::ChebyGin:
      h = multiscale_stack(graph, x, s.K, Aggregator::Sum);
      break;
  }
  h = apply_linear(layer.first, params, h);
  if (layer.second) h = apply_linear(*layer.second, params, ad::relu(h));
  return activate(h, s.activation);
}

}  // namespace attnpool
