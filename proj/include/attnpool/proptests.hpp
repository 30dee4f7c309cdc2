#pragma once

// Executable property and oracle checks. Each suite is deterministic for a
// given seed; every failure names the check and the offending case.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "attnpool/autodiff.hpp"
#include "attnpool/graph.hpp"
#include "attnpool/rng.hpp"

namespace attnpool::props {

struct CheckResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  double worst = 0.0;  // largest error metric seen (suite-specific meaning)
  std::string detail;  // first failure
};

struct SuiteResult {
  std::string suite;
  std::uint64_t seed = 0;
  double seconds = 0.0;
  std::vector<CheckResult> checks;

  bool passed() const;
  nlohmann::json to_json() const;
};

/// Central finite differences against the tape's gradients.
/// `build` records a scalar loss and returns it with the leaves that
/// correspond, in order, to `inputs`. Inputs are perturbed in place and
/// restored. Returns the worst per-entry error, where an entry counts as
/// exact when |analytic − numeric| ≤ abs_tol and otherwise contributes the
/// relative error |a − n| / max(|a|, |n|). Entries sitting on a kink (the
/// one-sided slopes disagree and the analytic value equals one of them) are
/// skipped and counted in `kinks`.
using LossBuilder = std::function<std::pair<ad::Var, std::vector<ad::Var>>(ad::Tape&)>;
double finite_difference_error(const std::vector<Matrix*>& inputs, const LossBuilder& build, double h = 1e-5,
                               double abs_tol = 1e-7, std::size_t* kinks = nullptr);

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -2.0, double hi = 2.0);
/// Erdős–Rényi graph with random features in [-1, 1].
Graph random_graph(Rng& rng, std::size_t n, double p, std::size_t feature_dim);
/// Relabels nodes: new index of old node i is perm[i].
Graph permute_graph(const Graph& g, const std::vector<std::size_t>& perm);
std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n);

// Independent brute-force oracles.
std::size_t triangles_by_enumeration(const Graph& g, std::vector<std::size_t>* per_node = nullptr);
/// Fraction of (positive, negative) pairs ranked correctly, ties ½.
double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive);
/// Kept set of top-k with k = ⌈num/den · N⌉ from exact integer arithmetic.
std::vector<std::size_t> topk_oracle(const std::vector<double>& alpha, std::size_t num, std::size_t den);
std::vector<std::size_t> threshold_oracle(const std::vector<double>& alpha, double alpha_tilde);
std::vector<Edge> induced_edges_oracle(const std::vector<Edge>& edges, const std::vector<std::size_t>& keep);

SuiteResult run_gradient_suite(std::uint64_t seed = 0, std::size_t instances = 20);
SuiteResult run_oracle_suite(std::uint64_t seed = 0);
SuiteResult run_invariant_suite(std::uint64_t seed = 0);

nlohmann::json summary_json(const std::vector<SuiteResult>& suites);

}  // namespace attnpool::props
