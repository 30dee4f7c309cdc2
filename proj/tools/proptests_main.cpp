// Runs the property/oracle suites and writes a JSON summary.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "attnpool/datasets.hpp"
#include "attnpool/proptests.hpp"

using namespace attnpool;

int main(int argc, char** argv) {
  CLI::App app{"Property and oracle suites"};
  std::uint64_t seed = 0;
  std::string suite = "all";
  std::string out;
  app.add_option("--seed", seed, "Suite seed");
  app.add_option("--suite", suite, "gradients, oracles, invariants or all");
  app.add_option("--out", out, "JSON summary path (stdout when omitted)");
  CLI11_PARSE(app, argc, argv);

  std::vector<props::SuiteResult> results;
  if (suite == "all" || suite == "gradients") results.push_back(props::run_gradient_suite(seed));
  if (suite == "all" || suite == "oracles") results.push_back(props::run_oracle_suite(seed));
  if (suite == "all" || suite == "invariants") results.push_back(props::run_invariant_suite(seed));
  if (results.empty()) {
    std::cerr << "error: unknown suite '" << suite << "'\n";
    return 2;
  }
  const auto summary = props::summary_json(results);
  for (const auto& s : results)
    for (const auto& c : s.checks)
      if (!c.passed) std::cerr << "FAIL " << s.suite << "/" << c.name << ": " << c.detail << "\n";
  if (out.empty())
    std::cout << summary.dump(2) << "\n";
  else
    write_file_atomic(out, summary.dump(2) + "\n");
  return summary["passed"].get<bool>() ? 0 : 1;
}
