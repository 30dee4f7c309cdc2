#include "attnpool/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "attnpool/datasets.hpp"
#include "attnpool/parallel.hpp"
#include "attnpool/rng.hpp"
#include "json_util.hpp"

namespace attnpool {

using nlohmann::json;

std::string to_string(Supervision s) {
  switch (s) {
    case Supervision::None: return "none";
    case Supervision::Gt: return "gt";
    case Supervision::Weak: return "weak";
  }
  return "?";
}

Supervision supervision_from_string(const std::string& s) {
  if (s == "none") return Supervision::None;
  if (s == "gt") return Supervision::Gt;
  if (s == "weak") return Supervision::Weak;
  throw std::invalid_argument("unknown supervision '" + s + "' (expected none, gt or weak)");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be finite and ≥ 0");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be ≥ 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be ≥ 0");
  if (epochs == 0) throw std::invalid_argument("train: epochs must be ≥ 1");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] >= epochs) throw std::invalid_argument("train: decay epochs must be < epochs");
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])
      throw std::invalid_argument("train: decay epochs must be strictly increasing");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("train: beta must be finite and ≥ 0");
}

json TrainConfig::to_json() const {
  return json{{"lr", lr},
              {"batch_size", batch_size},
              {"weight_decay", weight_decay},
              {"epochs", epochs},
              {"decay_epochs", decay_epochs},
              {"decay_factor", decay_factor},
              {"beta", beta},
              {"supervision", to_string(supervision)},
              {"seed", seed},
              {"eval_every", eval_every},
              {"frozen", frozen},
              {"adam", {{"beta1", kAdamBeta1}, {"beta2", kAdamBeta2}, {"eps", kAdamEps}}}};
}

// ---------------------------------------------------------------------------
// Losses and optimizer

ad::Var mse_loss(ad::Var prediction, double label) {
  const ad::Var diff = ad::add_scalar(prediction, -label);
  return ad::sum(ad::mul(diff, diff));
}

std::optional<ad::Var> kl_attention_loss(std::span<const double> gt, ad::Var alpha, double beta) {
  if (alpha.cols() != 1 || alpha.rows() != gt.size())
    throw std::invalid_argument("kl_attention_loss: target length " + std::to_string(gt.size()) + " vs α " +
                                alpha.value().shape_string());
  double mass = 0.0;
  double entropy_term = 0.0;  // Σ gt·log gt over the support
  for (double g : gt) {
    if (!(g >= 0.0)) throw std::invalid_argument("kl_attention_loss: negative ground-truth attention");
    mass += g;
    if (g > 0.0) entropy_term += g * std::log(g);
  }
  if (mass == 0.0) return std::nullopt;
  const double n = static_cast<double>(gt.size());
  ad::Tape& tape = *alpha.tape();
  const ad::Var target = tape.constant(Matrix(gt.size(), 1, std::vector<double>(gt.begin(), gt.end())));
  const ad::Var log_alpha = ad::log(ad::clamp_min(alpha, kAttentionLogFloor));
  const ad::Var cross = ad::sum(ad::mul(target, log_alpha));
  return ad::add_scalar(ad::scale(cross, -beta / n), beta / n * entropy_term);
}

void adam_step(ParamStore& params, const std::vector<Matrix>& grads, AdamState& state, double lr, double weight_decay,
               const std::vector<bool>* frozen) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient count mismatch");
  if (state.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.emplace_back(params.at(i).rows(), params.at(i).cols());
      state.v.emplace_back(params.at(i).rows(), params.at(i).cols());
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (frozen && (*frozen)[i]) continue;
    Matrix& p = params.at(i);
    const Matrix& g = grads[i];
    if (!g.same_shape(p)) throw std::invalid_argument("adam_step: gradient shape mismatch for " + params.name(i));
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    double* w = p.data();
    const double* gd = g.data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = gd[k] + weight_decay * w[k];
      m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * gk;
      v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kAdamEps);
    }
  }
}

// ---------------------------------------------------------------------------
// Per-graph loss

std::vector<std::vector<double>> stage_targets(const std::vector<double>& target,
                                               const std::vector<AttentionOutput>& stages) {
  std::vector<std::vector<double>> out;
  if (stages.empty()) return out;
  out.push_back(target);
  for (std::size_t s = 1; s < stages.size(); ++s) {
    const std::vector<double>& prev = out.back();
    std::vector<double> next;
    next.reserve(stages[s - 1].kept.size());
    double total = 0.0;
    for (std::size_t i : stages[s - 1].kept) {
      next.push_back(prev.at(i));
      total += prev[i];
    }
    if (total > 0.0)
      for (double& x : next) x /= total;
    else
      std::fill(next.begin(), next.end(), 0.0);
    out.push_back(std::move(next));
  }
  return out;
}

GraphLoss graph_loss_and_grad(const Model& model, const Graph& graph, const std::vector<double>* target, double beta,
                              bool supervised) {
  ad::Tape tape;
  BoundParams bound(tape, model.params());
  ForwardResult r = model.forward(bound, graph);
  ad::Var loss = mse_loss(r.prediction, static_cast<double>(graph.label));
  GraphLoss out;
  out.mse = loss.value()[0];
  if (supervised) {
    if (!target) throw std::invalid_argument("supervised training needs a target attention vector");
    if (target->size() != graph.n) throw std::invalid_argument("target attention length differs from node count");
    const auto targets = stage_targets(*target, r.stages);
    for (std::size_t s = 0; s < r.stages.size(); ++s) {
      if (auto kl = kl_attention_loss(targets[s], r.stages[s].alpha_var, beta)) {
        out.kl += kl->value()[0];
        loss = ad::add(loss, *kl);
      }
    }
  }
  out.total = loss.value()[0];
  tape.backward(loss);
  out.grads = bound.gradients();
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

void check_training_inputs(const ModelConfig& cfg, const DatasetSplit& split, const TrainConfig& tc, const WeakLabels* weak) {
  if (split.graphs.empty()) throw std::invalid_argument("train: empty training split");
  if (split.feature_dim != cfg.in_dim)
    throw std::invalid_argument("train: dataset feature width " + std::to_string(split.feature_dim) +
                                " does not match model in_dim " + std::to_string(cfg.in_dim));
  if (tc.supervision != Supervision::None && cfg.pool.mode == PoolMode::None)
    throw std::invalid_argument("train: attention supervision requires a pooling model");
  if (tc.supervision == Supervision::Gt) {
    for (std::size_t i = 0; i < split.graphs.size(); ++i)
      if (!split.graphs[i].gt_attention)
        throw std::invalid_argument("train: supervision=gt but training graph " + std::to_string(i) +
                                    " has no ground-truth attention");
  }
  if (tc.supervision == Supervision::Weak) {
    if (!weak) throw std::invalid_argument("train: supervision=weak requires weak labels");
    check_weak_labels(*weak, split);
  }
}

const std::vector<double>* target_for(const Graph& g, std::size_t index, const TrainConfig& tc, const WeakLabels* weak) {
  switch (tc.supervision) {
    case Supervision::None: return nullptr;
    case Supervision::Gt: return &*g.gt_attention;
    case Supervision::Weak: return &weak->alpha[index];
  }
  return nullptr;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const DatasetSplit& train_split, const DatasetSplit* val_split,
                  const TrainConfig& tc, const WeakLabels* weak) {
  return train(Model(model_cfg, tc.seed), train_split, val_split, tc, weak);
}

TrainResult train(Model initial, const DatasetSplit& train_split, const DatasetSplit* val_split, const TrainConfig& tc,
                  const WeakLabels* weak) {
  const ModelConfig model_cfg = initial.config();
  tc.validate();
  check_training_inputs(model_cfg, train_split, tc, weak);
  TrainResult result{std::move(initial), {}};
  Model& model = result.model;

  std::vector<bool> frozen(model.params().size(), false);
  for (const std::string& name : tc.frozen) {
    const auto idx = model.params().find(name);
    if (!idx) throw std::invalid_argument("train: frozen parameter '" + name + "' does not exist");
    frozen[*idx] = true;
  }

  const LabelRange range = label_range_for(model_cfg.task);
  const bool supervised = tc.supervision != Supervision::None;
  Rng order_rng = Rng::substream(tc.seed, "data-order");
  const std::size_t n = train_split.graphs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  AdamState adam;
  double lr = tc.lr;

  std::vector<GraphLoss> slot(tc.batch_size);
  std::vector<std::exception_ptr> failure(tc.batch_size);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    for (std::size_t k = n; k > 1; --k) {
      const auto j = static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(k - 1)));
      std::swap(order[k - 1], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += tc.batch_size, ++batch_index) {
      const std::size_t count = std::min(tc.batch_size, n - start);
      auto work = [&](std::size_t b) {
        try {
          const std::size_t gi = order[start + b];
          const Graph& g = train_split.graphs[gi];
          slot[b] = graph_loss_and_grad(model, g, target_for(g, gi, tc, weak), tc.beta, supervised);
          failure[b] = nullptr;
        } catch (...) {
          failure[b] = std::current_exception();
        }
      };
      const int threads = tc.parallel ? max_threads() : 1;
      if (threads > 1 && count > 1) {
#if defined(ATTNPOOL_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
        for (std::size_t b = 0; b < count; ++b) work(b);
      } else {
        for (std::size_t b = 0; b < count; ++b) work(b);
      }

      std::vector<Matrix> grads;
      for (std::size_t b = 0; b < count; ++b) {
        if (failure[b]) std::rethrow_exception(failure[b]);
        if (!std::isfinite(slot[b].total))
          throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + " (training graph " + std::to_string(order[start + b]) + ")");
        loss_sum += slot[b].total;
        if (grads.empty()) {
          grads = std::move(slot[b].grads);
        } else {
          for (std::size_t p = 0; p < grads.size(); ++p) grads[p] += slot[b].grads[p];
        }
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (Matrix& g : grads)
        for (double& x : g.values()) x *= inv;
      adam_step(model.params(), grads, adam, lr, tc.weight_decay, &frozen);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.lr = lr;
    if (val_split && tc.eval_every > 0 && (epoch % tc.eval_every == 0 || epoch == tc.epochs))
      rec.val_acc = accuracy(model, *val_split, range);
    result.history.push_back(rec);
    if (std::find(tc.decay_epochs.begin(), tc.decay_epochs.end(), epoch) != tc.decay_epochs.end()) lr *= tc.decay_factor;
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_acc,lr\n";
  char buf[128];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,", r.epoch, r.train_loss);
    out += buf;
    if (r.val_acc) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.val_acc);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", r.lr);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Occlusion

std::vector<double> occlusion_from_predictions(double full, std::span<const double> removed) {
  std::vector<double> alpha(removed.size());
  double total = 0.0;
  for (std::size_t i = 0; i < removed.size(); ++i) {
    alpha[i] = std::abs(removed[i] - full);
    total += alpha[i];
  }
  if (total > 0.0 && std::isfinite(total)) {
    for (double& a : alpha) a /= total;
  } else {
    std::fill(alpha.begin(), alpha.end(), 1.0 / static_cast<double>(removed.size()));
  }
  return alpha;
}

std::vector<double> occlusion_attention(const Model& model_b, const Graph& graph) {
  if (model_b.has_pooling())
    throw std::invalid_argument("occlusion: the scoring model must use global pooling only (no attention/pooling)");
  if (graph.n == 1) return {1.0};
  const double full = model_b.predict(graph);
  std::vector<double> removed(graph.n);
  for (std::size_t i = 0; i < graph.n; ++i) removed[i] = model_b.predict(remove_single_node(graph, i));
  return occlusion_from_predictions(full, removed);
}

WeakLabels occlusion_labels(const Model& model_b, const DatasetSplit& split, bool parallel) {
  if (model_b.has_pooling())
    throw std::invalid_argument("occlusion: the scoring model must use global pooling only (no attention/pooling)");
  WeakLabels out;
  out.alpha.resize(split.graphs.size());
  std::vector<std::exception_ptr> failure(split.graphs.size());
  const int threads = parallel ? max_threads() : 1;
  const auto count = static_cast<std::ptrdiff_t>(split.graphs.size());
#if defined(ATTNPOOL_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
#endif
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      out.alpha[static_cast<std::size_t>(i)] = occlusion_attention(model_b, split.graphs[static_cast<std::size_t>(i)]);
    } catch (...) {
      failure[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  (void)threads;
  for (auto& f : failure)
    if (f) std::rethrow_exception(f);
  return out;
}

void save_weak_labels(const WeakLabels& labels, const std::filesystem::path& path) {
  std::string text = json{{"format_version", 1}, {"kind", "occlusion"}, {"count", labels.alpha.size()}}.dump() + "\n";
  for (std::size_t i = 0; i < labels.alpha.size(); ++i)
    text += json{{"index", i}, {"alpha", labels.alpha[i]}}.dump() + "\n";
  write_file_atomic(path, text);
}

WeakLabels load_weak_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open weak-label file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty weak-label file");
  std::size_t count = 0;
  try {
    const json meta = json::parse(line);
    detail::StrictObject o(meta, "weak-label metadata");
    if (o.get<int>("format_version") != 1) throw std::invalid_argument("unsupported format_version");
    o.get<std::string>("kind");
    count = o.get<std::size_t>("count");
    o.finish();
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ":1: " + e.what());
  }
  WeakLabels out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    try {
      const json j = json::parse(line);
      detail::StrictObject o(j, "weak label");
      if (o.get<std::size_t>("index") != out.alpha.size()) throw std::invalid_argument("index out of sequence");
      auto alpha = o.get<std::vector<double>>("alpha");
      o.finish();
      double total = 0.0;
      for (double a : alpha) {
        if (!(a >= 0.0)) throw std::invalid_argument("negative weight");
        total += a;
      }
      if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("weights do not sum to 1");
      out.alpha.push_back(std::move(alpha));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.alpha.size() != count)
    throw std::runtime_error(path.string() + ": expected " + std::to_string(count) + " label vectors, found " +
                             std::to_string(out.alpha.size()));
  return out;
}

void check_weak_labels(const WeakLabels& labels, const DatasetSplit& split) {
  if (labels.alpha.size() != split.graphs.size())
    throw std::invalid_argument("weak labels cover " + std::to_string(labels.alpha.size()) + " graphs, split has " +
                                std::to_string(split.graphs.size()));
  for (std::size_t i = 0; i < split.graphs.size(); ++i)
    if (labels.alpha[i].size() != split.graphs[i].n)
      throw std::invalid_argument("weak label " + std::to_string(i) + " has length " +
                                  std::to_string(labels.alpha[i].size()) + ", graph has " +
                                  std::to_string(split.graphs[i].n) + " nodes");
}

WeakSupResult weaksup_pipeline(const ModelConfig& cfg_a, const ModelConfig& cfg_b, const DatasetSplit& train_split,
                               const DatasetSplit* val_split, const TrainConfig& train_a, const TrainConfig& train_b) {
  if (cfg_b.pool.mode != PoolMode::None) throw std::invalid_argument("weak supervision: model B must not pool");
  if (cfg_a.pool.mode == PoolMode::None) throw std::invalid_argument("weak supervision: model A needs attention pooling");
  if (cfg_a.conv != cfg_b.conv || cfg_a.filters != cfg_b.filters || cfg_a.K != cfg_b.K ||
      cfg_a.mlp_hidden != cfg_b.mlp_hidden || cfg_a.readout != cfg_b.readout || cfg_a.in_dim != cfg_b.in_dim)
    throw std::invalid_argument("weak supervision: models A and B must share the convolutional architecture");
  if (train_b.supervision != Supervision::None) throw std::invalid_argument("weak supervision: B trains with MSE only");
  if (train_a.supervision != Supervision::Weak) throw std::invalid_argument("weak supervision: A must use supervision=weak");
  TrainResult b = train(cfg_b, train_split, val_split, train_b);
  WeakLabels labels = occlusion_labels(b.model, train_split);
  TrainResult a = train(cfg_a, train_split, val_split, train_a, &labels);
  return WeakSupResult{std::move(b), std::move(labels), std::move(a)};
}

}  // namespace attnpool
