// attnpool command-line entry point: gen, train, occlude, eval, report.

#include <CLI11.hpp>

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "attnpool/checkpoint.hpp"
#include "attnpool/config.hpp"
#include "attnpool/datasets.hpp"
#include "attnpool/eval.hpp"
#include "attnpool/parallel.hpp"
#include "attnpool/training.hpp"

namespace fs = std::filesystem;
using namespace attnpool;
using nlohmann::json;

namespace {

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw std::runtime_error("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

struct GenArgs {
  std::string task;
  std::string out;
  std::uint64_t seed = 0;
  std::string scale = "paper";
  std::size_t dim = 3;
  bool force = false;
};

void cmd_gen(const GenArgs& a) {
  if (a.scale != "paper" && a.scale != "desk") throw std::runtime_error("--scale must be paper or desk");
  Dataset ds;
  if (a.task == "colors") {
    ColorsConfig c;
    c.seed = a.seed;
    c.dim = a.dim;
    ds = gen_colors(c);
  } else if (a.task == "triangles") {
    if (a.dim != 3) throw std::runtime_error("--dim applies to colors only");
    TrianglesConfig c = a.scale == "desk" ? TrianglesConfig::desk_scale(a.seed) : TrianglesConfig{};
    c.seed = a.seed;
    ds = gen_triangles(c);
  } else {
    throw std::runtime_error("--task must be colors or triangles");
  }
  ds.metadata["scale"] = a.scale;
  prepare_out_dir(a.out, a.force);
  save_dataset(ds, a.out);
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  int jobs = 1;
  bool force = false;
  bool eval = false;
};

void run_seed(const ExperimentConfig& exp, const Dataset& ds, std::uint64_t seed, const fs::path& dir, bool parallel,
              bool eval) {
  fs::create_directories(dir);
  TrainConfig tc = exp.train;
  tc.seed = seed;
  tc.parallel = parallel;
  json resolved = exp.to_json();
  resolved["seed"] = seed;
  resolved["train"]["seed"] = seed;
  resolved["dataset"] = ds.metadata;
  write_file_atomic(dir / "config.json", resolved.dump(2) + "\n");

  const DatasetSplit& train_split = ds.at(SplitName::Train);
  const DatasetSplit* val = ds.splits.count(SplitName::Val) ? &ds.at(SplitName::Val) : nullptr;
  WeakLabels weak;
  if (tc.supervision == Supervision::Weak) {
    if (exp.weak.labels_path) {
      weak = load_weak_labels(*exp.weak.labels_path);
    } else {
      TrainConfig tb = *exp.weak.teacher;
      tb.seed = seed;
      tb.parallel = parallel;
      TrainResult b = train(exp.teacher_model(), train_split, val, tb);
      save_checkpoint(b.model, dir / "teacher_checkpoint.json", json{{"seed", seed}, {"role", "teacher"}});
      write_file_atomic(dir / "teacher_history.csv", history_csv(b.history));
      weak = occlusion_labels(b.model, train_split, parallel);
    }
    save_weak_labels(weak, dir / "weak_labels.jsonl");
  }
  TrainResult r = train(exp.model, train_split, val, tc, tc.supervision == Supervision::Weak ? &weak : nullptr);
  save_checkpoint(r.model, dir / "checkpoint.json", json{{"seed", seed}, {"train", tc.to_json()}});
  write_file_atomic(dir / "history.csv", history_csv(r.history));
  if (eval) write_run_csv(evaluate_run(r.model, ds, seed, exp.eval), dir / "eval.csv");
}

void cmd_train(const TrainArgs& a) {
  ExperimentConfig exp = load_experiment(a.config);
  const std::string data = !a.data.empty() ? a.data : exp.data.value_or("");
  const std::string out = !a.out.empty() ? a.out : exp.out.value_or("");
  if (data.empty()) throw std::runtime_error("no dataset directory (--data or config 'data')");
  if (out.empty()) throw std::runtime_error("no output directory (--out or config 'out')");
  std::vector<SplitName> splits{SplitName::Train, SplitName::Val};
  if (a.eval)
    for (SplitName s : {SplitName::TestOrig, SplitName::TestLarge, SplitName::TestLargeC})
      if (fs::exists(fs::path(data) / split_filename(s))) splits.push_back(s);
  const Dataset ds = load_dataset(data, splits);
  if (ds.task != exp.model.task)
    throw std::runtime_error("config task '" + exp.model.task + "' does not match dataset task '" + ds.task + "'");
  const std::size_t width = ds.at(SplitName::Train).feature_dim;
  if (exp.in_dim_from_data)
    exp.model.in_dim = width;
  else if (exp.model.in_dim != width)
    throw std::runtime_error("config in_dim " + std::to_string(exp.model.in_dim) + " does not match dataset feature width " +
                             std::to_string(width));
  exp.model.validate();
  if (exp.train.supervision == Supervision::Gt)
    for (const Graph& g : ds.at(SplitName::Train).graphs)
      if (!g.gt_attention) throw std::runtime_error("supervision=gt but the dataset has no ground-truth attention");
  if (exp.weak.labels_path) check_weak_labels(load_weak_labels(*exp.weak.labels_path), ds.at(SplitName::Train));

  prepare_out_dir(out, a.force);
  const int jobs = std::max(1, std::min<int>(a.jobs, static_cast<int>(exp.seeds.size())));
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t k = next++; k < exp.seeds.size(); k = next++) {
      try {
        const std::uint64_t seed = exp.seeds[k];
        run_seed(exp, ds, seed, fs::path(out) / ("seed_" + std::to_string(seed)), jobs == 1, a.eval);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct OccludeArgs {
  std::string ckpt, data, split = "train", out;
};

void cmd_occlude(const OccludeArgs& a) {
  const Model model = load_checkpoint(a.ckpt);
  if (model.has_pooling())
    throw std::runtime_error("occlusion needs a global-pool model; checkpoint " + a.ckpt + " has attention pooling");
  const SplitName which = split_from_string(a.split);
  const Dataset ds = load_dataset(a.data, {which});
  if (ds.task != model.config().task) throw std::runtime_error("checkpoint task does not match dataset task");
  const WeakLabels labels = occlusion_labels(model, ds.at(which));
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  save_weak_labels(labels, a.out);
}

struct EvalArgs {
  std::string ckpt, data, out, auc_mode = "pooled";
  std::size_t occlusion_max = 0;
  bool print = false;
};

void print_report(const RunReport& r) {
  std::cout << r.task << " " << r.model << " seed " << r.seed << "\n";
  for (const auto& [subset, acc] : r.accuracy) std::cout << "  " << subset << " accuracy " << acc << "\n";
  if (r.attention_auc) std::cout << "  attention AUC (" << r.auc_source << ") " << *r.attention_auc << "\n";
}

void cmd_eval(const EvalArgs& a) {
  std::ifstream in(a.ckpt);
  if (!in) throw std::runtime_error("cannot open checkpoint " + a.ckpt);
  const json j = json::parse(in);
  const Model model = model_from_checkpoint(j);
  const std::uint64_t seed = j["metadata"].value("seed", std::uint64_t{0});
  const Dataset ds = load_dataset(a.data, {});
  EvalOptions opts;
  if (a.auc_mode == "pooled")
    opts.auc_mode = AucMode::Pooled;
  else if (a.auc_mode == "per_graph")
    opts.auc_mode = AucMode::PerGraphMean;
  else
    throw std::runtime_error("--auc-mode must be pooled or per_graph");
  opts.occlusion_max_graphs = a.occlusion_max;
  const RunReport r = evaluate_run(model, ds, seed, opts);
  write_run_csv(r, a.out);
  if (a.print) print_report(r);
}

struct ReportArgs {
  std::string runs, out;
  bool print = false;
};

void cmd_report(const ReportArgs& a) {
  if (!fs::is_directory(a.runs)) throw std::runtime_error(a.runs + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a.runs)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path());
    std::string header;
    std::getline(in, header);
    if (header == "task,model,subset,metric,value,seed") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunReport> reports;
  for (const auto& f : files)
    for (RunReport& r : read_run_csv(f)) reports.push_back(std::move(r));
  if (reports.empty()) throw std::runtime_error("no run reports found under " + a.runs);
  const auto rows = aggregate(reports);
  write_aggregate_csv(rows, a.out);
  if (a.print) std::cout << aggregate_csv(rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based node pooling on synthetic graph tasks"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a dataset");
  g->add_option("--task", gen.task, "colors or triangles")->required();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Generator seed")->required();
  g->add_option("--scale", gen.scale, "paper or desk (desk shrinks Triangles to 5000/1000/1000)");
  g->add_option("--dim", gen.dim, "Colors feature dimension n");
  g->add_flag("--force", gen.force, "Replace a non-empty output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one run per configured seed");
  t->add_option("--config", tr.config, "Experiment config JSON")->required();
  t->add_option("--data", tr.data, "Dataset directory");
  t->add_option("--out", tr.out, "Run directory");
  t->add_option("--jobs", tr.jobs, "Seeds trained concurrently");
  t->add_flag("--force", tr.force, "Replace a non-empty run directory");
  t->add_flag("--eval", tr.eval, "Evaluate on the test subsets after training (eval.csv per seed)");

  OccludeArgs oc;
  auto* o = app.add_subcommand("occlude", "Occlusion weak labels from a global-pool model");
  o->add_option("--ckpt", oc.ckpt, "Checkpoint of model B")->required();
  o->add_option("--data", oc.data, "Dataset directory")->required();
  o->add_option("--split", oc.split, "Split to label");
  o->add_option("--out", oc.out, "Output JSON Lines file")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Accuracy and attention AUC on the test subsets");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--out", ev.out, "Run report CSV")->required();
  e->add_option("--auc-mode", ev.auc_mode, "pooled or per_graph");
  e->add_option("--occlusion-max", ev.occlusion_max, "Graphs per subset scored by occlusion for global-pool models (0 = all)");
  e->add_flag("--print", ev.print, "Print a summary to stdout");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Aggregate run reports into mean ± std");
  r->add_option("--runs", rp.runs, "Directory searched recursively for run report CSVs")->required();
  r->add_option("--out", rp.out, "Aggregate CSV")->required();
  r->add_flag("--print", rp.print, "Print the aggregate CSV to stdout");

  CLI11_PARSE(app, argc, argv);
  try {
    if (g->parsed()) cmd_gen(gen);
    if (t->parsed()) cmd_train(tr);
    if (o->parsed()) cmd_occlude(oc);
    if (e->parsed()) cmd_eval(ev);
    if (r->parsed()) cmd_report(rp);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
