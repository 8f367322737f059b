#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmct/dataset.hpp"
#include "gmct/expression.hpp"
#include "gmct/grammar.hpp"

namespace gmct {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenConstraints {
  TreeLimits limits{25, 10, 5};  // trees must have node_count < max_nodes
  double const_min = 0.5;
  double const_max = 5.0;
  double x_min = -5.0;
  double x_max = 5.0;
  double min_range_width = 2.0;
  int n_rows = 100;
  int max_retries = 100;
};

struct Problem {
  SyntaxTree tree;
  std::vector<double> constants;
  TabularDataset dataset;
};

// Independent, reproducible stream for item `index` of a run seeded with `seed`.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index);

SyntaxTree sample_tree(const Grammar& grammar, const GenConstraints& constraints, std::mt19937_64& rng);

// Variables occurring anywhere below a log node.
std::set<int> variables_under_log(const SyntaxTree& tree);

Problem sample_dataset(const SyntaxTree& tree, int n_vars, const GenConstraints& constraints,
                       std::mt19937_64& rng, std::string id = "problem");

std::vector<Problem> generate_problems(const Grammar& grammar, int n, const GenConstraints& constraints,
                                       std::uint64_t seed, const std::string& id_prefix = "p");

}  // namespace gmct
