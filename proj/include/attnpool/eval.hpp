#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnpool/datasets.hpp"
#include "attnpool/model.hpp"

namespace attnpool {

struct LabelRange {
  int lo = 0;
  int hi = 10;
};

/// Colors: 0..10 green nodes; Triangles: 1..10 triangles.
LabelRange label_range_for(const std::string& task);

/// Nearest integer, clamped to the label range.
int decode_prediction(double y, LabelRange range);

double accuracy_from_predictions(std::span<const double> predictions, std::span<const int> labels, LabelRange range);

/// Percent of graphs whose decoded prediction equals the label.
double accuracy(const Model& model, const DatasetSplit& split, LabelRange range);

enum class AucMode { Pooled, PerGraphMean };

/// Relevance labels are gt > 0. Pooled mode concatenates every node of every
/// graph; per-graph mode averages over graphs that have both classes.
/// Returns nullopt when the AUC is undefined (a single class). Percent.
std::optional<double> attention_auc(const std::vector<std::vector<double>>& predicted,
                                    const std::vector<std::vector<double>>& ground_truth, AucMode mode = AucMode::Pooled);

/// Rank-sum AUC of one pool; ties count one half. Fraction in [0, 1].
std::optional<double> rank_auc(std::span<const double> scores, const std::vector<bool>& positive);

struct EvalOptions {
  AucMode auc_mode = AucMode::Pooled;
  /// Global-pool models score attention by occlusion; cap the graphs used
  /// per test subset (0 = all).
  std::size_t occlusion_max_graphs = 0;
  bool compute_auc = true;
};

struct RunReport {
  std::string task;
  std::string model;
  std::uint64_t seed = 0;
  double runtime_seconds = 0.0;
  /// Percent per subset; "combined" pools every test subset.
  std::map<std::string, double> accuracy;
  std::optional<double> attention_auc;  // percent, combined test set
  std::string auc_source;               // "attention" or "occlusion"
};

/// Test subsets of the dataset in canonical order.
std::vector<SplitName> test_subsets(const Dataset& ds);

RunReport evaluate_run(const Model& model, const Dataset& ds, std::uint64_t seed, const EvalOptions& opts = {});

/// One row per (model, subset, metric) cell.
struct AggregateRow {
  std::string task;
  std::string model;
  std::string subset;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // unbiased; 0 for a single run
  std::size_t n_seeds = 0;
};

/// Rejects reports from different tasks.
std::vector<AggregateRow> aggregate(const std::vector<RunReport>& reports);

/// Per-run CSV: task,model,subset,metric,value,seed
void write_run_csv(const RunReport& report, const std::filesystem::path& path);
std::vector<RunReport> read_run_csv(const std::filesystem::path& path);

/// Aggregate CSV: task,model,subset,metric,mean,std,n_seeds
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);
std::vector<AggregateRow> parse_aggregate_csv(const std::string& text);

}  // namespace attnpool
