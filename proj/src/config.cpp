#include "attnpool/config.hpp"

#include <fstream>
#include <stdexcept>

#include "json_util.hpp"

namespace attnpool {

using nlohmann::json;

namespace {

struct TaskDefaults {
  std::vector<std::size_t> filters;
  Readout readout;
  std::size_t gin_hidden;
  std::size_t cheby_K;
  std::optional<std::size_t> chebygin_hidden;
  AttentionKind attention;
  std::vector<std::size_t> pool_after;
};

TaskDefaults defaults_for(const std::string& task) {
  if (task == "colors") return {{64, 64}, Readout::Sum, 256, 2, std::nullopt, AttentionKind::LinearProjection, {0}};
  if (task == "triangles") return {{64, 64, 64}, Readout::Max, 64, 7, 64, AttentionKind::Gnn, {1, 2}};
  throw std::invalid_argument("experiment: task must be colors or triangles, got '" + task + "'");
}

double default_alpha_tilde(const std::string& task, Supervision s) {
  if (task == "colors") return s == Supervision::None ? 0.03 : 0.05;
  switch (s) {
    case Supervision::None: return 0.0001;
    case Supervision::Gt: return 0.001;
    case Supervision::Weak: return 0.01;
  }
  return 0.0;
}

double default_ratio(const std::string& task, Supervision s) {
  if (task == "triangles" && s != Supervision::None) return 0.97;
  return 1.0;
}

struct Schedule {
  std::size_t epochs;
  std::vector<std::size_t> decay;
};

Schedule default_schedule(const std::string& task, bool pooling) {
  if (task == "colors") return pooling ? Schedule{300, {280}} : Schedule{100, {90}};
  return {100, {85, 95}};
}

void read_schedule(detail::StrictObject& o, TrainConfig& t, const Schedule& def) {
  t.epochs = o.get_or<std::size_t>("epochs", def.epochs);
  if (o.has("decay_epochs")) {
    t.decay_epochs = o.get<std::vector<std::size_t>>("decay_epochs");
  } else if (o.has("epochs")) {
    // Keep the default decay points that still fit a custom epoch count.
    t.decay_epochs.clear();
    for (std::size_t e : def.decay)
      if (e < t.epochs) t.decay_epochs.push_back(e);
  } else {
    t.decay_epochs = def.decay;
  }
}

}  // namespace

ModelConfig ExperimentConfig::teacher_model() const {
  ModelConfig b = model;
  b.pool = PoolSpec{};
  b.tag = (model.tag.empty() ? model.default_tag() : model.tag) + "-teacher";
  return b;
}

json ExperimentConfig::to_json() const {
  json j;
  j["model"] = model.to_json();
  j["train"] = train.to_json();
  j["seeds"] = seeds;
  if (weak.labels_path) j["weak_labels"] = *weak.labels_path;
  if (weak.teacher) j["teacher"] = weak.teacher->to_json();
  j["eval"] = {{"auc_mode", eval.auc_mode == AucMode::Pooled ? "pooled" : "per_graph"},
               {"occlusion_max_graphs", eval.occlusion_max_graphs}};
  if (data) j["data"] = *data;
  if (out) j["out"] = *out;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  detail::StrictObject o(j, "experiment config");
  ExperimentConfig c;
  ModelConfig& m = c.model;
  TrainConfig& t = c.train;

  m.task = o.get<std::string>("task");
  const TaskDefaults d = defaults_for(m.task);
  m.conv = conv_kind_from_string(o.get<std::string>("model"));
  m.pool.mode = pool_mode_from_string(o.get_or<std::string>("pooling", "none"));
  t.supervision = supervision_from_string(o.get_or<std::string>("supervision", "none"));
  const bool pooling = m.pool.mode != PoolMode::None;
  if (t.supervision != Supervision::None && !pooling)
    throw std::invalid_argument("experiment config: supervision '" + to_string(t.supervision) +
                                "' needs pooling topk or threshold");

  if (o.has("in_dim")) {
    m.in_dim = o.get<std::size_t>("in_dim");
    c.in_dim_from_data = false;
  } else {
    m.in_dim = m.task == "colors" ? 4 : 1;
  }
  m.filters = o.get_or("filters", d.filters);
  m.readout = readout_from_string(o.get_or<std::string>("readout", to_string(d.readout)));

  const bool multiscale = m.conv == ConvKind::Cheby || m.conv == ConvKind::ChebyGin;
  if (multiscale)
    m.K = o.get_or<std::size_t>("K", d.cheby_K);
  else
    o.reject("K", "for model " + to_string(m.conv));
  switch (m.conv) {
    case ConvKind::Gin:
      m.mlp_hidden = o.get_or<std::size_t>("mlp_hidden", d.gin_hidden);
      break;
    case ConvKind::ChebyGin:
      if (o.has("mlp_hidden")) {
        const auto& mh = o.raw("mlp_hidden");
        m.mlp_hidden = mh.is_null() ? std::nullopt : std::optional<std::size_t>(mh.get<std::size_t>());
      } else {
        m.mlp_hidden = d.chebygin_hidden;
      }
      break;
    default:
      o.reject("mlp_hidden", "for model " + to_string(m.conv));
      m.mlp_hidden = std::nullopt;
  }

  if (pooling) {
    m.attention = attention_kind_from_string(o.get_or<std::string>("attention", to_string(d.attention)));
    m.pool.layers_after = o.get_or("pool_after", d.pool_after);
    if (m.attention == AttentionKind::Gnn)
      m.attn_arch = attn_arch_from_string(o.get_or<std::string>("attn_arch", "paper_appendix"));
    else
      o.reject("attn_arch", "for linear attention");
    if (m.pool.mode == PoolMode::Threshold) {
      m.pool.alpha_tilde = o.get_or("alpha_tilde", default_alpha_tilde(m.task, t.supervision));
      o.reject("ratio", "with threshold pooling");
    } else {
      m.pool.ratio = o.get_or("ratio", default_ratio(m.task, t.supervision));
      o.reject("alpha_tilde", "with top-k pooling");
    }
  } else {
    for (const char* k : {"attention", "pool_after", "attn_arch", "alpha_tilde", "ratio"}) o.reject(k, "without pooling");
  }
  m.tag = o.get_or<std::string>("tag", "");

  t.lr = o.get_or("lr", 1e-3);
  t.batch_size = o.get_or<std::size_t>("batch_size", 32);
  t.weight_decay = o.get_or("weight_decay", 1e-4);
  read_schedule(o, t, default_schedule(m.task, pooling));
  t.decay_factor = o.get_or("decay_factor", 0.1);
  t.eval_every = o.get_or<std::size_t>("eval_every", 1);
  t.frozen = o.get_or("frozen", std::vector<std::string>{});
  if (t.supervision != Supervision::None)
    t.beta = o.get_or("beta", 100.0);
  else
    o.reject("beta", "without attention supervision");

  c.seeds = o.get_or("seeds", std::vector<std::uint64_t>{0});
  if (c.seeds.empty()) throw std::invalid_argument("experiment config: seeds must not be empty");

  if (t.supervision == Supervision::Weak) {
    if (o.has("weak_labels") == o.has("teacher"))
      throw std::invalid_argument("experiment config: supervision=weak needs exactly one of 'weak_labels' or 'teacher'");
    if (o.has("weak_labels")) c.weak.labels_path = o.get<std::string>("weak_labels");
    if (o.has("teacher")) {
      detail::StrictObject to(o.raw("teacher"), "experiment config teacher");
      TrainConfig tb = t;
      tb.supervision = Supervision::None;
      tb.frozen.clear();
      read_schedule(to, tb, default_schedule(m.task, false));
      tb.lr = to.get_or("lr", t.lr);
      to.finish();
      c.weak.teacher = tb;
    }
  } else {
    o.reject("weak_labels", "unless supervision=weak");
    o.reject("teacher", "unless supervision=weak");
  }

  if (o.has("eval")) {
    detail::StrictObject e(o.raw("eval"), "experiment config eval");
    const std::string mode = e.get_or<std::string>("auc_mode", "pooled");
    if (mode == "pooled")
      c.eval.auc_mode = AucMode::Pooled;
    else if (mode == "per_graph")
      c.eval.auc_mode = AucMode::PerGraphMean;
    else
      throw std::invalid_argument("experiment config eval: auc_mode must be pooled or per_graph");
    c.eval.occlusion_max_graphs = e.get_or<std::size_t>("occlusion_max_graphs", 0);
    e.finish();
  }
  if (o.has("data")) c.data = o.get<std::string>("data");
  if (o.has("out")) c.out = o.get<std::string>("out");
  o.finish();

  t.validate();
  if (c.weak.teacher) c.weak.teacher->validate();
  if (!c.in_dim_from_data) m.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": malformed JSON: " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

}  // namespace attnpool
