#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnpool/autodiff.hpp"
#include "attnpool/eval.hpp"
#include "attnpool/model.hpp"

namespace attnpool {

enum class Supervision { None, Gt, Weak };

std::string to_string(Supervision s);
Supervision supervision_from_string(const std::string& s);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  double weight_decay = 1e-4;
  std::size_t epochs = 100;
  std::vector<std::size_t> decay_epochs{90};  // lr ×= decay_factor after each
  double decay_factor = 0.1;
  double beta = 100.0;
  Supervision supervision = Supervision::None;
  std::uint64_t seed = 0;
  /// Validation accuracy every eval_every epochs and at the last one (0 = never).
  std::size_t eval_every = 1;
  /// Parameters excluded from updates (no gradient step, no weight decay).
  std::vector<std::string> frozen;
  /// Graph-level parallelism inside a batch; results do not depend on it.
  bool parallel = true;

  void validate() const;
  nlohmann::json to_json() const;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kAttentionLogFloor = 1e-15;

/// (pred − label)²
ad::Var mse_loss(ad::Var prediction, double label);

/// (β/N)·Σ gt_i·log(gt_i / α_i) with 0·log 0 = 0 and α floored at 1e-15.
/// nullopt when gt is all-zero (term skipped). Rejects negative gt entries.
std::optional<ad::Var> kl_attention_loss(std::span<const double> gt, ad::Var alpha, double beta);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t t = 0;
};

/// One Adam step with L2 decay folded into the gradient. `frozen` (optional,
/// aligned with the store) skips parameters entirely.
void adam_step(ParamStore& params, const std::vector<Matrix>& grads, AdamState& state, double lr, double weight_decay,
               const std::vector<bool>* frozen = nullptr);

/// Target for each pooling stage: stage 0 is the given vector, later stages
/// restrict the previous target to the kept nodes and renormalise (all-zero
/// when nothing important survives).
std::vector<std::vector<double>> stage_targets(const std::vector<double>& target,
                                               const std::vector<AttentionOutput>& stages);

struct GraphLoss {
  double total = 0.0;
  double mse = 0.0;
  double kl = 0.0;
  std::vector<Matrix> grads;  // aligned with the parameter store
};

/// Loss and parameter gradients for one graph. target may be null for
/// unsupervised training.
GraphLoss graph_loss_and_grad(const Model& model, const Graph& graph, const std::vector<double>* target, double beta,
                              bool supervised);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_acc;
  double lr = 0.0;
};

struct WeakLabels {
  std::vector<std::vector<double>> alpha;  // aligned with the split by graph index
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
};

/// Trains from a fresh initialisation drawn from train_cfg.seed.
TrainResult train(const ModelConfig& model_cfg, const DatasetSplit& train_split, const DatasetSplit* val_split,
                  const TrainConfig& train_cfg, const WeakLabels* weak = nullptr);
/// Trains starting from the given parameters; train_cfg.seed only drives
/// the data order.
TrainResult train(Model initial, const DatasetSplit& train_split, const DatasetSplit* val_split,
                  const TrainConfig& train_cfg, const WeakLabels* weak = nullptr);

std::string history_csv(const std::vector<EpochRecord>& history);

/// |y_i − y| / Σ_j |y_j − y|, uniform when the denominator is zero.
std::vector<double> occlusion_from_predictions(double full, std::span<const double> removed);

/// Per-node occlusion importance from a global-pool model.
std::vector<double> occlusion_attention(const Model& model_b, const Graph& graph);

/// Occlusion vectors for every graph; parallel across graphs when asked.
WeakLabels occlusion_labels(const Model& model_b, const DatasetSplit& split, bool parallel = true);

void save_weak_labels(const WeakLabels& labels, const std::filesystem::path& path);
WeakLabels load_weak_labels(const std::filesystem::path& path);
/// Rejects label files whose count or vector lengths disagree with the split.
void check_weak_labels(const WeakLabels& labels, const DatasetSplit& split);

struct WeakSupResult {
  TrainResult model_b;
  WeakLabels labels;
  TrainResult model_a;
};

/// Trains B (no pooling, MSE only), labels the training split by occlusion,
/// then trains A on those labels.
WeakSupResult weaksup_pipeline(const ModelConfig& cfg_a, const ModelConfig& cfg_b, const DatasetSplit& train_split,
                               const DatasetSplit* val_split, const TrainConfig& train_a, const TrainConfig& train_b);

}  // namespace attnpool
