#include "attnpool/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

#include "attnpool/kernels.hpp"
#include "attnpool/rng.hpp"
#include "json_util.hpp"

namespace attnpool {

using nlohmann::json;

namespace {

json range_json(NodeRange r) { return json::array({r.lo, r.hi}); }

void check_range(NodeRange r, const char* what) {
  if (r.lo < 1 || r.hi < r.lo) throw std::invalid_argument(std::string("invalid node range for ") + what);
}

std::vector<Edge> erdos_renyi(Rng& rng, std::size_t n, double p) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) edges.push_back({i, j});
  return edges;
}

bool is_connected(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = n;
  for (const Edge& e : edges) {
    const std::size_t a = root(e.u), b = root(e.v);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components <= 1;
}

double connected_fraction(const DatasetSplit& s) {
  if (s.graphs.empty()) return 0.0;
  std::size_t c = 0;
  for (const Graph& g : s.graphs) c += is_connected(g.n, g.edges) ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(s.graphs.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Configs

void ColorsConfig::validate() const {
  if (dim < 2) throw std::invalid_argument("colors: dim must be ≥ 2 (green is channel 2)");
  if (dim > 20) throw std::invalid_argument("colors: dim above 20 is not supported");
  check_range(small, "colors small graphs");
  check_range(large, "colors large graphs");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw std::invalid_argument("colors: edge_prob must lie in [0,1]");
}

json ColorsConfig::to_json() const {
  return json{{"dim", dim},         {"n_train", n_train},
              {"n_val", n_val},     {"n_test", n_test},
              {"small_nodes", range_json(small)}, {"large_nodes", range_json(large)},
              {"max_green", max_green}, {"edge_prob", edge_prob},
              {"graph_model", "erdos_renyi"}};
}

void TrianglesConfig::validate() const {
  check_range(small, "triangles small graphs");
  check_range(large, "triangles large graphs");
  if (min_label < 1 || max_label < min_label) throw std::invalid_argument("triangles: invalid label range");
  if (small.hi < 3) throw std::invalid_argument("triangles: graphs need at least 3 nodes");
}

json TrianglesConfig::to_json() const {
  return json{{"n_train", n_train},
              {"n_val", n_val},
              {"n_test", n_test},
              {"small_nodes", range_json(small)},
              {"large_nodes", range_json(large)},
              {"label_range", json::array({min_label, max_label})},
              {"attempts_per_graph", attempts_per_graph},
              {"graph_model", "erdos_renyi"},
              {"edge_prob_rule", "p = clamp(cbrt(target / C(N,3)), 0.005, 0.95), target drawn among unfilled classes"},
              {"stratified", true}};
}

TrianglesConfig TrianglesConfig::desk_scale(std::uint64_t seed) {
  TrianglesConfig c;
  c.n_train = 5000;
  c.n_val = 1000;
  c.n_test = 1000;
  c.seed = seed;
  return c;
}

const DatasetSplit& Dataset::at(SplitName s) const {
  auto it = splits.find(s);
  if (it == splits.end()) throw std::invalid_argument("dataset has no split '" + to_string(s) + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Triangles

TriangleStats count_triangles(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) throw std::invalid_argument("count_triangles: adjacency must be square");
  const Matrix a2 = kernels::matmul_nn(adjacency, adjacency);
  TriangleStats stats;
  stats.per_node.resize(n);
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double cube_ii = 0.0;
    for (std::size_t j = 0; j < n; ++j) cube_ii += a2(i, j) * adjacency(j, i);
    if (cube_ii != std::floor(cube_ii) || static_cast<long long>(cube_ii) % 2 != 0)
      throw std::logic_error("count_triangles: (A³)_ii is not an even integer; invalid adjacency");
    stats.per_node[i] = static_cast<std::size_t>(cube_ii) / 2;
    trace += cube_ii;
  }
  if (static_cast<long long>(trace) % 6 != 0) throw std::logic_error("count_triangles: trace(A³) not divisible by 6");
  stats.total = static_cast<std::size_t>(trace) / 6;
  return stats;
}

// ---------------------------------------------------------------------------
// Colors

std::vector<std::vector<double>> colors_palette(std::size_t dim, bool unseen_colors) {
  std::vector<std::size_t> channels;
  for (std::size_t c = 0; c < dim + 1; ++c)
    if (c != kColorsGreenChannel && (unseen_colors || c < dim)) channels.push_back(c);
  std::vector<std::vector<double>> palette;
  if (!unseen_colors) {
    for (std::size_t c : channels) {
      std::vector<double> v(dim + 1, 0.0);
      v[c] = 1.0;
      palette.push_back(v);
    }
    return palette;
  }
  // Every binary vector over the non-green channels, all-zero included.
  const std::size_t count = std::size_t{1} << channels.size();
  for (std::size_t code = 0; code < count; ++code) {
    std::vector<double> v(dim + 1, 0.0);
    for (std::size_t b = 0; b < channels.size(); ++b)
      if (code >> b & 1U) v[channels[b]] = 1.0;
    palette.push_back(v);
  }
  return palette;
}

namespace {

Graph make_colors_graph(Rng& rng, const ColorsConfig& cfg, NodeRange range, bool unseen) {
  const std::size_t width = cfg.dim + 1;
  Graph g;
  g.n = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(range.lo), static_cast<std::int64_t>(range.hi)));
  const std::size_t green = static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(std::min(cfg.max_green, g.n))));
  std::vector<std::size_t> order(g.n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = 0; k < green; ++k) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k), static_cast<std::int64_t>(g.n - 1)));
    std::swap(order[k], order[j]);
  }
  std::vector<bool> is_green(g.n, false);
  for (std::size_t k = 0; k < green; ++k) is_green[order[k]] = true;

  std::vector<std::size_t> seen_channels;
  for (std::size_t c = 0; c < cfg.dim; ++c)
    if (c != kColorsGreenChannel) seen_channels.push_back(c);
  std::vector<std::size_t> unseen_channels = seen_channels;
  unseen_channels.push_back(cfg.dim);

  g.features = Matrix(g.n, width);
  for (std::size_t i = 0; i < g.n; ++i) {
    if (is_green[i]) {
      g.features(i, kColorsGreenChannel) = 1.0;
    } else if (!unseen) {
      const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(seen_channels.size()) - 1);
      g.features(i, seen_channels[static_cast<std::size_t>(pick)]) = 1.0;
    } else {
      const auto code = static_cast<std::uint64_t>(
          rng.uniform_int(0, (std::int64_t{1} << unseen_channels.size()) - 1));
      for (std::size_t b = 0; b < unseen_channels.size(); ++b)
        if (code >> b & 1U) g.features(i, unseen_channels[b]) = 1.0;
    }
  }
  g.edges = erdos_renyi(rng, g.n, cfg.edge_prob);
  g.label = static_cast<int>(green);
  std::vector<double> gt(g.n, 0.0);
  if (green > 0)
    for (std::size_t i = 0; i < g.n; ++i)
      if (is_green[i]) gt[i] = 1.0 / static_cast<double>(green);
  g.gt_attention = std::move(gt);
  return g;
}

DatasetSplit colors_split(const ColorsConfig& cfg, SplitName name, std::size_t count, NodeRange range, bool unseen) {
  Rng rng = Rng::substream(cfg.seed, "colors/" + to_string(name));
  DatasetSplit split;
  split.name = name;
  split.feature_dim = cfg.dim + 1;
  split.graphs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) split.graphs.push_back(make_colors_graph(rng, cfg, range, unseen));
  return split;
}

}  // namespace

Dataset gen_colors(const ColorsConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.task = "colors";
  ds.splits[SplitName::Train] = colors_split(cfg, SplitName::Train, cfg.n_train, cfg.small, false);
  ds.splits[SplitName::Val] = colors_split(cfg, SplitName::Val, cfg.n_val, cfg.small, false);
  ds.splits[SplitName::TestOrig] = colors_split(cfg, SplitName::TestOrig, cfg.n_test, cfg.small, false);
  ds.splits[SplitName::TestLarge] = colors_split(cfg, SplitName::TestLarge, cfg.n_test, cfg.large, false);
  ds.splits[SplitName::TestLargeC] = colors_split(cfg, SplitName::TestLargeC, cfg.n_test, cfg.large, true);

  json palette;
  palette["green"] = [&] {
    std::vector<double> v(cfg.dim + 1, 0.0);
    v[kColorsGreenChannel] = 1.0;
    return v;
  }();
  palette["seen_non_green"] = colors_palette(cfg.dim, false);
  if (cfg.dim <= 6)
    palette["unseen_non_green"] = colors_palette(cfg.dim, true);
  else
    palette["unseen_non_green"] = "every binary vector over the non-green channels";
  json connectivity;
  for (const auto& [name, split] : ds.splits) connectivity[to_string(name)] = connected_fraction(split);
  ds.metadata = json{{"format_version", kDatasetFormatVersion},
                     {"task", "colors"},
                     {"seed", cfg.seed},
                     {"config", cfg.to_json()},
                     {"palette", palette},
                     {"connected_fraction", connectivity},
                     {"features", "stored"}};
  return ds;
}

// ---------------------------------------------------------------------------
// Triangles generation

namespace {

DatasetSplit triangles_split(const TrianglesConfig& cfg, SplitName name, std::size_t count, NodeRange range) {
  Rng rng = Rng::substream(cfg.seed, "triangles/" + to_string(name));
  const int classes = cfg.max_label - cfg.min_label + 1;
  std::vector<std::size_t> quota(static_cast<std::size_t>(classes), count / static_cast<std::size_t>(classes));
  for (std::size_t c = 0; c < count % static_cast<std::size_t>(classes); ++c) ++quota[c];

  DatasetSplit split;
  split.name = name;
  split.graphs.reserve(count);
  const std::size_t budget = cfg.attempts_per_graph * std::max<std::size_t>(count, 1);
  std::size_t attempts = 0;
  std::vector<std::size_t> open;
  while (split.graphs.size() < count) {
    open.clear();
    for (std::size_t c = 0; c < quota.size(); ++c)
      if (quota[c] > 0) open.push_back(c);
    if (++attempts > budget) {
      std::string strata;
      for (std::size_t c : open) strata += (strata.empty() ? "" : ",") + std::to_string(cfg.min_label + static_cast<int>(c));
      throw std::runtime_error("triangles: sampling budget exhausted for split " + to_string(name) +
                               "; unfilled label strata {" + strata + "}");
    }
    const auto n = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(range.lo), static_cast<std::int64_t>(range.hi)));
    const auto target = cfg.min_label + static_cast<int>(open[static_cast<std::size_t>(
                                            rng.uniform_int(0, static_cast<std::int64_t>(open.size()) - 1))]);
    const double triples = static_cast<double>(n) * static_cast<double>(n - 1) * static_cast<double>(n - 2) / 6.0;
    if (triples < target) continue;
    const double p = std::clamp(std::cbrt(static_cast<double>(target) / triples), 0.005, 0.95);
    Graph g;
    g.n = n;
    g.edges = erdos_renyi(rng, n, p);
    const TriangleStats stats = count_triangles(adjacency_dense(g));
    const int label = static_cast<int>(stats.total);
    if (label < cfg.min_label || label > cfg.max_label) continue;
    auto& q = quota[static_cast<std::size_t>(label - cfg.min_label)];
    if (q == 0) continue;
    --q;
    g.label = label;
    std::vector<double> gt(n);
    const double denom = 3.0 * static_cast<double>(stats.total);
    for (std::size_t i = 0; i < n; ++i) gt[i] = static_cast<double>(stats.per_node[i]) / denom;
    g.gt_attention = std::move(gt);
    split.graphs.push_back(std::move(g));
  }
  return split;
}

void attach_degree_features(DatasetSplit& split, std::size_t cap) {
  split.feature_dim = cap + 1;
  for (Graph& g : split.graphs) g.features = degree_onehot(g, cap);
}

}  // namespace

Dataset gen_triangles(const TrianglesConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.task = "triangles";
  ds.splits[SplitName::Train] = triangles_split(cfg, SplitName::Train, cfg.n_train, cfg.small);
  ds.splits[SplitName::Val] = triangles_split(cfg, SplitName::Val, cfg.n_val, cfg.small);
  ds.splits[SplitName::TestOrig] = triangles_split(cfg, SplitName::TestOrig, cfg.n_test, cfg.small);
  ds.splits[SplitName::TestLarge] = triangles_split(cfg, SplitName::TestLarge, cfg.n_test, cfg.large);

  std::size_t cap = 0;
  if (cfg.degree_cap) {
    cap = *cfg.degree_cap;
  } else {
    for (const Graph& g : ds.splits[SplitName::Train].graphs)
      for (std::size_t d : degrees(g.n, g.edges)) cap = std::max(cap, d);
  }
  for (auto& [name, split] : ds.splits) attach_degree_features(split, cap);

  json connectivity;
  for (const auto& [name, split] : ds.splits) connectivity[to_string(name)] = connected_fraction(split);
  ds.metadata = json{{"format_version", kDatasetFormatVersion},
                     {"task", "triangles"},
                     {"seed", cfg.seed},
                     {"config", cfg.to_json()},
                     {"degree_cap", cap},
                     {"connected_fraction", connectivity},
                     {"features", "degree_onehot"}};
  return ds;
}

// ---------------------------------------------------------------------------
// I/O

std::string split_filename(SplitName s) { return to_string(s) + ".jsonl"; }

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string graph_to_line(const Graph& g, bool include_features) {
  json j;
  j["n"] = g.n;
  json edges = json::array();
  for (const Edge& e : g.edges) edges.push_back(json::array({e.u, e.v}));
  j["edges"] = std::move(edges);
  if (include_features) {
    json rows = json::array();
    for (std::size_t i = 0; i < g.features.rows(); ++i) {
      auto r = g.features.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    j["features"] = std::move(rows);
  }
  j["label"] = g.label;
  j["gt_attn"] = g.gt_attention ? json(*g.gt_attention) : json(nullptr);
  return j.dump();
}

Graph graph_from_line(const std::string& line, std::optional<std::size_t> degree_cap) {
  const json j = json::parse(line);
  detail::StrictObject o(j, "graph");
  Graph g;
  g.n = o.get<std::size_t>("n");
  for (const auto& e : o.raw("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("graph: edge must be a pair");
    g.edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
  }
  if (o.has("features")) {
    const auto rows = o.get<std::vector<std::vector<double>>>("features");
    const std::size_t width = rows.empty() ? 0 : rows.front().size();
    g.features = Matrix(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != width) throw std::invalid_argument("graph: ragged feature rows");
      std::copy(rows[i].begin(), rows[i].end(), g.features.row(i).begin());
    }
  }
  g.label = o.get<int>("label");
  const auto& gt = o.raw("gt_attn");
  if (!gt.is_null()) g.gt_attention = gt.get<std::vector<double>>();
  o.finish();
  if (!o.has("features")) {
    if (!degree_cap) throw std::invalid_argument("graph: features omitted but no degree_cap in metadata");
    g.features = degree_onehot(g, *degree_cap);
  }
  g.validate();
  return g;
}

namespace {
std::string checksum_hex(std::uint64_t h) {
  std::ostringstream os;
  os << "fnv1a64:" << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}
}  // namespace

void save_split(const DatasetSplit& split, const json& metadata, const std::filesystem::path& path) {
  const bool derived = metadata.contains("features") && metadata["features"] == "degree_onehot";
  std::string body;
  for (const Graph& g : split.graphs) {
    body += graph_to_line(g, !derived);
    body += '\n';
  }
  json meta = metadata;
  meta["split"] = to_string(split.name);
  meta["count"] = split.graphs.size();
  meta["feature_dim"] = split.feature_dim;
  meta["checksum"] = checksum_hex(fnv1a64(body));
  write_file_atomic(path, meta.dump() + "\n" + body);
}

LoadedSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file (missing metadata line)");
  LoadedSplit out;
  try {
    out.metadata = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ":1: malformed metadata line: " + e.what());
  }
  const auto& meta = out.metadata;
  if (!meta.is_object() || !meta.contains("format_version") || meta["format_version"] != kDatasetFormatVersion)
    throw std::runtime_error(path.string() + ":1: unsupported or missing format_version");
  for (const char* key : {"split", "count", "feature_dim", "checksum"})
    if (!meta.contains(key)) throw std::runtime_error(path.string() + ":1: metadata lacks '" + key + "'");
  std::optional<std::size_t> cap;
  if (meta.contains("degree_cap")) cap = meta["degree_cap"].get<std::size_t>();
  out.split.name = split_from_string(meta["split"].get<std::string>());
  out.split.feature_dim = meta["feature_dim"].get<std::size_t>();
  const bool triangles = meta.value("task", "") == "triangles";

  std::uint64_t h = 0xCBF29CE484222325ULL;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    for (unsigned char c : line) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 0x100000001B3ULL;
    try {
      Graph g = graph_from_line(line, cap);
      if (g.feature_dim() != out.split.feature_dim)
        throw std::invalid_argument("feature width " + std::to_string(g.feature_dim()) + " ≠ split feature_dim " +
                                    std::to_string(out.split.feature_dim));
      if (triangles) {
        const std::size_t total = count_triangles(adjacency_dense(g)).total;
        if (static_cast<long long>(total) != g.label)
          throw std::invalid_argument("label " + std::to_string(g.label) + " but the graph has " + std::to_string(total) +
                                      " triangles");
      }
      out.split.graphs.push_back(std::move(g));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed graph line: " + e.what());
    }
  }
  if (out.split.graphs.size() != meta["count"].get<std::size_t>())
    throw std::runtime_error(path.string() + ": expected " + std::to_string(meta["count"].get<std::size_t>()) +
                             " graphs, found " + std::to_string(out.split.graphs.size()));
  if (checksum_hex(h) != meta["checksum"].get<std::string>())
    throw std::runtime_error(path.string() + ": checksum mismatch (file modified or truncated)");
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, split] : ds.splits) save_split(split, ds.metadata, dir / split_filename(name));
}

Dataset load_dataset(const std::filesystem::path& dir, const std::vector<SplitName>& which) {
  std::vector<SplitName> names = which;
  if (names.empty()) {
    for (SplitName s : {SplitName::Train, SplitName::Val, SplitName::TestOrig, SplitName::TestLarge, SplitName::TestLargeC})
      if (std::filesystem::exists(dir / split_filename(s))) names.push_back(s);
    if (names.empty()) throw std::runtime_error("no dataset split files found in " + dir.string());
  }
  Dataset ds;
  for (SplitName s : names) {
    LoadedSplit loaded = load_split(dir / split_filename(s));
    if (loaded.split.name != s)
      throw std::runtime_error((dir / split_filename(s)).string() + ": metadata names split " + to_string(loaded.split.name));
    const std::string task = loaded.metadata.value("task", "");
    if (ds.task.empty()) {
      ds.task = task;
      ds.metadata = loaded.metadata;
      for (const char* key : {"split", "count", "feature_dim", "checksum"}) ds.metadata.erase(key);
    } else if (task != ds.task) {
      throw std::runtime_error("dataset directory mixes tasks " + ds.task + " and " + task);
    }
    ds.splits[s] = std::move(loaded.split);
  }
  return ds;
}

}  // namespace attnpool
