#include "attnpool/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "attnpool/parallel.hpp"
#include "attnpool/training.hpp"

namespace attnpool {

LabelRange label_range_for(const std::string& task) {
  if (task == "colors") return {0, 10};
  if (task == "triangles") return {1, 10};
  throw std::invalid_argument("unknown task '" + task + "'");
}

int decode_prediction(double y, LabelRange range) {
  if (std::isnan(y)) return range.lo;
  const double r = std::round(y);
  if (r <= range.lo) return range.lo;
  if (r >= range.hi) return range.hi;
  return static_cast<int>(r);
}

double accuracy_from_predictions(std::span<const double> predictions, std::span<const int> labels, LabelRange range) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("accuracy: prediction/label count mismatch");
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty split");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hit += decode_prediction(predictions[i], range) == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(predictions.size());
}

namespace {

struct SplitPredictions {
  std::vector<double> y;
  std::vector<std::vector<double>> alpha;  // first-stage α, when requested
};

SplitPredictions predict_split(const Model& model, const DatasetSplit& split, bool with_attention) {
  if (split.feature_dim != model.config().in_dim)
    throw std::invalid_argument("split '" + to_string(split.name) + "' has feature width " +
                                std::to_string(split.feature_dim) + ", model expects " +
                                std::to_string(model.config().in_dim));
  SplitPredictions out;
  const std::size_t n = split.graphs.size();
  out.y.resize(n);
  if (with_attention) out.alpha.resize(n);
  std::vector<std::exception_ptr> failure(n);
  const int threads = max_threads();
#if defined(ATTNPOOL_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      if (with_attention) {
        auto [y, stages] = model.predict_with_attention(split.graphs[k]);
        out.y[k] = y;
        out.alpha[k] = std::move(stages.at(0).alpha);
      } else {
        out.y[k] = model.predict(split.graphs[k]);
      }
    } catch (...) {
      failure[k] = std::current_exception();
    }
  }
  (void)threads;
  for (auto& f : failure)
    if (f) std::rethrow_exception(f);
  return out;
}

std::vector<int> labels_of(const DatasetSplit& split) {
  std::vector<int> labels;
  labels.reserve(split.graphs.size());
  for (const Graph& g : split.graphs) labels.push_back(g.label);
  return labels;
}

}  // namespace

double accuracy(const Model& model, const DatasetSplit& split, LabelRange range) {
  const SplitPredictions p = predict_split(model, split, false);
  return accuracy_from_predictions(p.y, labels_of(split), range);
}

std::optional<double> rank_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("auc: score/label count mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (bool p : positive) n_pos += p ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;  // 1-based average ranks of positives
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && scores[idx[hi + 1]] == scores[idx[lo]]) ++hi;
    const double avg_rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t k = lo; k <= hi; ++k)
      if (positive[idx[k]]) rank_sum += avg_rank;
    lo = hi + 1;
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::optional<double> attention_auc(const std::vector<std::vector<double>>& predicted,
                                    const std::vector<std::vector<double>>& ground_truth, AucMode mode) {
  if (predicted.size() != ground_truth.size()) throw std::invalid_argument("auc: graph count mismatch");
  for (std::size_t g = 0; g < predicted.size(); ++g)
    if (predicted[g].size() != ground_truth[g].size())
      throw std::invalid_argument("auc: graph " + std::to_string(g) + " has mismatched attention lengths");

  auto relevance = [](const std::vector<double>& gt) {
    std::vector<bool> r(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) r[i] = gt[i] > 0.0;
    return r;
  };
  if (mode == AucMode::Pooled) {
    std::vector<double> scores;
    std::vector<bool> pos;
    for (std::size_t g = 0; g < predicted.size(); ++g) {
      scores.insert(scores.end(), predicted[g].begin(), predicted[g].end());
      const auto r = relevance(ground_truth[g]);
      pos.insert(pos.end(), r.begin(), r.end());
    }
    const auto auc = rank_auc(scores, pos);
    if (!auc) return std::nullopt;
    return 100.0 * *auc;
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t g = 0; g < predicted.size(); ++g) {
    if (const auto auc = rank_auc(predicted[g], relevance(ground_truth[g]))) {
      total += *auc;
      ++counted;
    }
  }
  if (counted == 0) return std::nullopt;
  return 100.0 * total / static_cast<double>(counted);
}

std::vector<SplitName> test_subsets(const Dataset& ds) {
  std::vector<SplitName> out;
  for (SplitName s : {SplitName::TestOrig, SplitName::TestLarge, SplitName::TestLargeC})
    if (ds.splits.count(s)) out.push_back(s);
  return out;
}

RunReport evaluate_run(const Model& model, const Dataset& ds, std::uint64_t seed, const EvalOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (ds.task != model.config().task)
    throw std::invalid_argument("evaluation: model trained for task '" + model.config().task + "' but dataset is '" +
                                ds.task + "'");
  const auto subsets = test_subsets(ds);
  if (subsets.empty()) throw std::invalid_argument("evaluation: dataset has no test subsets");
  const LabelRange range = label_range_for(ds.task);
  const bool attention = model.has_pooling();

  RunReport report;
  report.task = ds.task;
  report.model = model.config().tag.empty() ? model.config().default_tag() : model.config().tag;
  report.seed = seed;

  std::vector<double> all_y;
  std::vector<int> all_labels;
  std::vector<std::vector<double>> pred_alpha, gt_alpha;
  for (SplitName s : subsets) {
    const DatasetSplit& split = ds.at(s);
    SplitPredictions p = predict_split(model, split, attention && opts.compute_auc);
    const auto labels = labels_of(split);
    report.accuracy[to_string(s)] = accuracy_from_predictions(p.y, labels, range);
    all_y.insert(all_y.end(), p.y.begin(), p.y.end());
    all_labels.insert(all_labels.end(), labels.begin(), labels.end());
    if (!opts.compute_auc) continue;
    if (attention) {
      for (std::size_t i = 0; i < split.graphs.size(); ++i) {
        if (!split.graphs[i].gt_attention) continue;
        pred_alpha.push_back(std::move(p.alpha[i]));
        gt_alpha.push_back(*split.graphs[i].gt_attention);
      }
    } else {
      DatasetSplit subset;
      subset.name = split.name;
      subset.feature_dim = split.feature_dim;
      const std::size_t limit = opts.occlusion_max_graphs == 0 ? split.graphs.size()
                                                                : std::min(opts.occlusion_max_graphs, split.graphs.size());
      for (std::size_t i = 0; i < limit; ++i)
        if (split.graphs[i].gt_attention) subset.graphs.push_back(split.graphs[i]);
      WeakLabels occ = occlusion_labels(model, subset);
      for (std::size_t i = 0; i < subset.graphs.size(); ++i) {
        pred_alpha.push_back(std::move(occ.alpha[i]));
        gt_alpha.push_back(*subset.graphs[i].gt_attention);
      }
    }
  }
  report.accuracy["combined"] = accuracy_from_predictions(all_y, all_labels, range);
  if (opts.compute_auc) {
    report.attention_auc = attention_auc(pred_alpha, gt_alpha, opts.auc_mode);
    report.auc_source = attention ? "attention" : "occlusion";
  }
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// Aggregation and CSV

std::vector<AggregateRow> aggregate(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  using Key = std::tuple<std::string, std::string, std::string>;  // model, subset, metric
  std::map<Key, std::vector<double>> cells;
  const std::string& task = reports.front().task;
  for (const RunReport& r : reports) {
    if (r.task != task) throw std::invalid_argument("aggregate: mixed tasks '" + task + "' and '" + r.task + "'");
    for (const auto& [subset, acc] : r.accuracy) cells[{r.model, subset, "accuracy"}].push_back(acc);
    if (r.attention_auc) cells[{r.model, "combined", "attention_auc"}].push_back(*r.attention_auc);
  }
  std::vector<AggregateRow> rows;
  for (auto& [key, values] : cells) {
    std::sort(values.begin(), values.end());
    AggregateRow row;
    row.task = task;
    std::tie(row.model, row.subset, row.metric) = key;
    row.n_seeds = values.size();
    row.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() >= 2) {
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      row.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw std::invalid_argument("CSV field '" + s + "' contains a separator");
  return s;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

}  // namespace

void write_run_csv(const RunReport& r, const std::filesystem::path& path) {
  std::string text = "task,model,subset,metric,value,seed\n";
  const std::string prefix = field(r.task) + "," + field(r.model) + ",";
  for (const auto& [subset, acc] : r.accuracy)
    text += prefix + field(subset) + ",accuracy," + num(acc) + "," + std::to_string(r.seed) + "\n";
  if (r.attention_auc)
    text += prefix + "combined,attention_auc," + num(*r.attention_auc) + "," + std::to_string(r.seed) + "\n";
  write_text(path, text);
}

std::vector<RunReport> read_run_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "task,model,subset,metric,value,seed")
    throw std::runtime_error(path.string() + ": not a run report CSV");
  std::map<std::tuple<std::string, std::string, std::uint64_t>, RunReport> runs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    try {
      const std::uint64_t seed = std::stoull(f[5]);
      RunReport& r = runs[{f[0], f[1], seed}];
      r.task = f[0];
      r.model = f[1];
      r.seed = seed;
      const double value = std::stod(f[4]);
      if (f[3] == "accuracy")
        r.accuracy[f[2]] = value;
      else if (f[3] == "attention_auc")
        r.attention_auc = value;
      else
        throw std::invalid_argument("unknown metric '" + f[3] + "'");
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<RunReport> out;
  for (auto& [k, r] : runs) out.push_back(std::move(r));
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string text = "task,model,subset,metric,mean,std,n_seeds\n";
  for (const AggregateRow& r : rows)
    text += field(r.task) + "," + field(r.model) + "," + field(r.subset) + "," + field(r.metric) + "," + num(r.mean) + "," +
            num(r.stddev) + "," + std::to_string(r.n_seeds) + "\n";
  return text;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  write_text(path, aggregate_csv(rows));
}

std::vector<AggregateRow> parse_aggregate_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "task,model,subset,metric,mean,std,n_seeds")
    throw std::invalid_argument("not an aggregate report CSV");
  std::vector<AggregateRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw std::invalid_argument("aggregate CSV row needs 7 fields: " + line);
    rows.push_back({f[0], f[1], f[2], f[3], std::stod(f[4]), std::stod(f[5]), static_cast<std::size_t>(std::stoull(f[6]))});
  }
  return rows;
}

}  // namespace attnpool
