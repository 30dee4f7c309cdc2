#include "attnpool/model.hpp"

#include <stdexcept>

#include "json_util.hpp"

namespace attnpool {

std::string to_string(AttentionKind k) { return k == AttentionKind::LinearProjection ? "linear" : "gnn"; }

AttentionKind attention_kind_from_string(const std::string& s) {
  if (s == "linear") return AttentionKind::LinearProjection;
  if (s == "gnn") return AttentionKind::Gnn;
  throw std::invalid_argument("unknown attention kind '" + s + "' (expected linear|gnn)");
}

std::string to_string(AttnArch a) { return a == AttnArch::PaperAppendix ? "paper_appendix" : "paper_body"; }

AttnArch attn_arch_from_string(const std::string& s) {
  if (s == "paper_appendix") return AttnArch::PaperAppendix;
  if (s == "paper_body") return AttnArch::PaperBody;
  throw std::invalid_argument("unknown attn_arch '" + s + "' (expected paper_appendix|paper_body)");
}

// ---------------------------------------------------------------------------
// ModelConfig

namespace {
bool is_multiscale(ConvKind k) { return k == ConvKind::Cheby || k == ConvKind::ChebyGin; }
}  // namespace

void ModelConfig::validate() const {
  if (task != "colors" && task != "triangles")
    throw std::invalid_argument("model: task must be colors or triangles, got '" + task + "'");
  if (in_dim == 0) throw std::invalid_argument("model: in_dim must be positive");
  if (filters.empty()) throw std::invalid_argument("model: at least one conv layer required");
  for (std::size_t i = 0; i < filters.size(); ++i) layer_spec(i).validate();
  pool.validate(filters.size());
}

LayerSpec ModelConfig::layer_spec(std::size_t layer) const {
  LayerSpec s;
  s.kind = conv;
  s.in_dim = layer == 0 ? in_dim : filters.at(layer - 1);
  s.out_dim = filters.at(layer);
  s.K = is_multiscale(conv) ? K : 1;
  s.mlp_hidden = (conv == ConvKind::Gin || conv == ConvKind::ChebyGin) ? mlp_hidden : std::nullopt;
  s.activation = Activation::Relu;
  return s;
}

std::size_t ModelConfig::width_at(std::size_t pos) const { return pos == 0 ? in_dim : filters.at(pos - 1); }

std::string ModelConfig::default_tag() const {
  return to_string(conv) + "-" + (pool.mode == PoolMode::None ? std::string("gpool") : to_string(pool.mode));
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["in_dim"] = in_dim;
  j["conv"] = to_string(conv);
  j["filters"] = filters;
  j["K"] = K;
  j["mlp_hidden"] = mlp_hidden ? nlohmann::json(*mlp_hidden) : nlohmann::json(nullptr);
  j["readout"] = to_string(readout);
  nlohmann::json p;
  p["mode"] = to_string(pool.mode);
  if (pool.mode == PoolMode::TopK) p["ratio"] = pool.ratio;
  if (pool.mode == PoolMode::Threshold) p["alpha_tilde"] = pool.alpha_tilde;
  if (pool.mode != PoolMode::None) p["layers_after"] = pool.layers_after;
  j["pooling"] = p;
  j["attention"] = to_string(attention);
  j["attn_arch"] = to_string(attn_arch);
  j["tag"] = tag.empty() ? default_tag() : tag;
  // ChebyGIN sum scales are D·(D⁻¹A)^k·X with the raw degree (no self-loop).
  j["chebygin_degree"] = "raw_degree_times_mean";
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  detail::StrictObject o(j, "model config");
  ModelConfig c;
  c.task = o.get<std::string>("task");
  c.in_dim = o.get<std::size_t>("in_dim");
  c.conv = conv_kind_from_string(o.get<std::string>("conv"));
  c.filters = o.get<std::vector<std::size_t>>("filters");
  c.K = o.get<std::size_t>("K");
  const auto& mh = o.raw("mlp_hidden");
  c.mlp_hidden = mh.is_null() ? std::nullopt : std::optional<std::size_t>(mh.get<std::size_t>());
  c.readout = readout_from_string(o.get<std::string>("readout"));
  {
    detail::StrictObject p(o.raw("pooling"), "model config pooling");
    c.pool.mode = pool_mode_from_string(p.get<std::string>("mode"));
    if (c.pool.mode == PoolMode::TopK) c.pool.ratio = p.get<double>("ratio");
    if (c.pool.mode == PoolMode::Threshold) c.pool.alpha_tilde = p.get<double>("alpha_tilde");
    if (c.pool.mode != PoolMode::None) c.pool.layers_after = p.get<std::vector<std::size_t>>("layers_after");
    p.finish();
  }
  c.attention = attention_kind_from_string(o.get<std::string>("attention"));
  c.attn_arch = attn_arch_from_string(o.get<std::string>("attn_arch"));
  c.tag = o.get_or<std::string>("tag", "");
  if (o.has("chebygin_degree") && o.get<std::string>("chebygin_degree") != "raw_degree_times_mean")
    throw std::invalid_argument("model config: unsupported chebygin_degree");
  o.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng = Rng::substream(seed, "init");
  build(rng);
}

Model::Model(ModelConfig config, const ParamStore& values) : config_(std::move(config)) {
  config_.validate();
  Rng rng(0);
  build(rng);
  if (values.size() != params_.size())
    throw std::invalid_argument("model: checkpoint has " + std::to_string(values.size()) + " parameters, architecture needs " +
                                std::to_string(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto idx = values.find(params_.name(i));
    if (!idx) throw std::invalid_argument("model: checkpoint lacks parameter '" + params_.name(i) + "'");
    const Matrix& v = values.at(*idx);
    if (!v.same_shape(params_.at(i)))
      throw std::invalid_argument("model: parameter '" + params_.name(i) + "' has shape " + v.shape_string() + ", expected " +
                                  params_.at(i).shape_string());
    params_.at(i) = v;
  }
}

void Model::build(Rng& rng) {
  const std::size_t layers = config_.filters.size();
  for (std::size_t l = 0; l < layers; ++l)
    convs_.push_back(make_conv(params_, "conv" + std::to_string(l + 1), config_.layer_spec(l), rng));
  head_ = make_linear(params_, "head", config_.filters.back(), 1, rng);

  if (config_.pool.mode == PoolMode::None) return;
  for (std::size_t s = 0; s < config_.pool.layers_after.size(); ++s) {
    AttentionModule m;
    m.kind = config_.attention;
    m.position = config_.pool.layers_after[s];
    const std::string prefix = "attn" + std::to_string(s + 1);
    const std::size_t width = config_.width_at(m.position);
    if (m.kind == AttentionKind::LinearProjection) {
      Matrix p(width, 1);
      for (double& x : p.values()) x = rng.normal();
      m.projection = params_.add(prefix + ".p", std::move(p));
    } else {
      std::vector<std::size_t> widths = config_.attn_arch == AttnArch::PaperAppendix
                                            ? config_.filters
                                            : std::vector<std::size_t>{32, 32, 32};
      std::size_t in = width;
      for (std::size_t l = 0; l < widths.size(); ++l) {
        LayerSpec spec;
        spec.kind = config_.conv;
        spec.in_dim = in;
        spec.out_dim = widths[l];
        spec.K = is_multiscale(config_.conv) ? 2 : 1;
        if (config_.conv == ConvKind::Gin || config_.conv == ConvKind::ChebyGin) spec.mlp_hidden = config_.mlp_hidden;
        spec.activation = Activation::Relu;
        m.gnn.push_back(make_conv(params_, prefix + ".conv" + std::to_string(l + 1), spec, rng));
        in = widths[l];
      }
      m.gnn_out = make_linear(params_, prefix + ".out", in, 1, rng);
    }
    attention_.push_back(std::move(m));
  }
}

ad::Var Model::attention_pre(const AttentionModule& module, const BoundParams& params, const GraphOperators& graph,
                             ad::Var x) const {
  if (module.kind == AttentionKind::LinearProjection) return linear_attention(x, params[module.projection]);
  ad::Var h = x;
  for (const ConvLayer& layer : module.gnn) h = conv_forward(layer, params, graph, h);
  return apply_linear(module.gnn_out, params, h);
}

ForwardResult Model::forward(const BoundParams& params, const Graph& graph) const {
  if (params.size() != params_.size()) throw std::invalid_argument("forward: parameters bound for another model");
  if (graph.feature_dim() != config_.in_dim)
    throw std::invalid_argument("forward: graph feature width " + std::to_string(graph.feature_dim()) +
                                " ≠ model input width " + std::to_string(config_.in_dim));
  if (graph.n == 0) throw std::invalid_argument("forward: empty graph");
  ad::Tape& tape = *params[0].tape();

  ForwardResult result;
  GraphOperators ops(graph);
  ad::Var h = tape.constant(graph.features);
  std::size_t stage = 0;
  for (std::size_t pos = 0; pos <= convs_.size(); ++pos) {
    if (stage < attention_.size() && attention_[stage].position == pos) {
      ad::Var pre = attention_pre(attention_[stage], params, ops, h);
      ad::Var alpha = ad::softmax_vector(pre);
      PoolResult pooled = pool(ops, h, alpha, config_.pool);
      pooled.output.alpha_pre = pre.value().values();
      result.stages.push_back(std::move(pooled.output));
      ops = std::move(pooled.reduced);
      h = pooled.z;
      ++stage;
    }
    if (pos < convs_.size()) h = conv_forward(convs_[pos], params, ops, h);
  }
  result.prediction = apply_linear(head_, params, readout(h, config_.readout));
  return result;
}

double Model::predict(const Graph& graph) const { return predict_with_attention(graph).first; }

std::pair<double, std::vector<AttentionOutput>> Model::predict_with_attention(const Graph& graph) const {
  ad::Tape tape(false);
  BoundParams bound(tape, params_);
  ForwardResult r = forward(bound, graph);
  const double y = r.prediction.value()[0];
  for (AttentionOutput& s : r.stages) s.alpha_var = ad::Var();
  return {y, std::move(r.stages)};
}

}  // namespace attnpool
