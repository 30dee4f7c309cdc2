#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnpool/autodiff.hpp"
#include "attnpool/graph.hpp"
#include "attnpool/layers.hpp"
#include "attnpool/pooling.hpp"

namespace attnpool {

enum class AttentionKind { LinearProjection, Gnn };
/// Which description of the Triangles attention GNN to build: the same
/// depth/width as the classifier with K=2 (appendix), or 3 layers of 32.
enum class AttnArch { PaperAppendix, PaperBody };

std::string to_string(AttentionKind k);
AttentionKind attention_kind_from_string(const std::string& s);
std::string to_string(AttnArch a);
AttnArch attn_arch_from_string(const std::string& s);

struct ModelConfig {
  std::string task = "colors";
  std::size_t in_dim = 4;
  ConvKind conv = ConvKind::Gin;
  std::vector<std::size_t> filters{64, 64};
  std::size_t K = 1;
  std::optional<std::size_t> mlp_hidden = 256;
  Readout readout = Readout::Sum;
  PoolSpec pool;
  AttentionKind attention = AttentionKind::LinearProjection;
  AttnArch attn_arch = AttnArch::PaperAppendix;
  std::string tag;  // free-form model label used in reports

  void validate() const;
  LayerSpec layer_spec(std::size_t layer) const;
  /// Width of the representation at pooling position `pos` (0 = input).
  std::size_t width_at(std::size_t pos) const;
  std::string default_tag() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Attention subnetwork for one pooling stage.
struct AttentionModule {
  AttentionKind kind = AttentionKind::LinearProjection;
  std::size_t position = 0;
  std::size_t projection = 0;  // linear kind: index of p (C×1)
  std::vector<ConvLayer> gnn;  // gnn kind
  Linear gnn_out;              // gnn kind: hidden → 1
};

struct ForwardResult {
  ad::Var prediction;  // 1×1
  std::vector<AttentionOutput> stages;
};

class Model {
 public:
  /// Fresh parameters drawn from the "init" substream of seed.
  Model(ModelConfig config, std::uint64_t seed);
  /// Builds the architecture, then replaces parameter values (shapes must match).
  Model(ModelConfig config, const ParamStore& values);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  bool has_pooling() const { return config_.pool.mode != PoolMode::None; }

  ForwardResult forward(const BoundParams& params, const Graph& graph) const;
  /// Inference-only prediction.
  double predict(const Graph& graph) const;
  /// Inference-only forward that also returns per-stage attention.
  std::pair<double, std::vector<AttentionOutput>> predict_with_attention(const Graph& graph) const;

  /// α_pre for one stage, exposed for tests of the attention subnetworks.
  ad::Var attention_pre(const AttentionModule& module, const BoundParams& params,
                        const GraphOperators& graph, ad::Var x) const;
  const std::vector<AttentionModule>& attention_modules() const { return attention_; }

 private:
  void build(Rng& rng);

  ModelConfig config_;
  ParamStore params_;
  std::vector<ConvLayer> convs_;
  Linear head_;
  std::vector<AttentionModule> attention_;
};

}  // namespace attnpool
