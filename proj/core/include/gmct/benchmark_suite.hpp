#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gmct/dataset.hpp"
#include "gmct/engine.hpp"

namespace gmct {

struct BenchmarkEquation {
  std::string id;
  std::string expression;  // prefix tokens, `^ e b` = b^e
  int n_vars = 1;
  std::vector<std::pair<double, double>> ranges;  // one per variable; equal bounds pin a variable
  int n_rows = 20;
};

// The twelve Nguyen equations with their default sampling ranges.
std::vector<BenchmarkEquation> nguyen_suite();
std::vector<BenchmarkEquation> load_suite(const std::filesystem::path& path);
void save_suite(const std::vector<BenchmarkEquation>& suite, const std::filesystem::path& path);
std::vector<BenchmarkEquation> select_subset(const std::vector<BenchmarkEquation>& suite,
                                             const std::vector<std::string>& ids);

TabularDataset make_benchmark_dataset(const BenchmarkEquation& equation, std::uint64_t seed);

struct BenchmarkVariant {
  std::string name;
  MctsConfig mcts;
};

struct BenchmarkConfig {
  int budget = 100000;
  EngineConfig engine;
  int jobs = 1;
};

struct BenchmarkRow {
  std::string equation_id;
  std::string grammar;
  std::string variant;
  std::uint64_t seed = 0;
  std::optional<int> sims_to_fit;  // empty when the budget ran out
  int explored_states = 0;
  bool failed = false;
  double wall_ms = 0.0;
  std::string best_equation;
  double best_reward = -1.0;
};

// One row per (equation, variant, seed), in that nesting order.
std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkEquation>& suite, const Grammar& grammar,
                                        const std::string& grammar_name,
                                        const std::vector<BenchmarkVariant>& variants,
                                        const std::vector<std::uint64_t>& seeds, const BenchmarkConfig& config);

struct BenchmarkSummary {
  std::string equation_id;
  std::string grammar;
  std::string variant;
  double mean = 0.0;  // over successful runs, NaN if none
  double stddev = 0.0;
  int failed = 0;
  int runs = 0;
  double mean_with_budget = 0.0;  // failed runs counted at the budget
};

std::vector<BenchmarkSummary> summarize(const std::vector<BenchmarkRow>& rows, int budget);

void write_results_csv(const std::vector<BenchmarkRow>& rows, const std::filesystem::path& path);
void write_summary_csv(const std::vector<BenchmarkSummary>& summary, const std::filesystem::path& path);

}  // namespace gmct
