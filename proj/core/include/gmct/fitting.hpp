#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gmct/dataset.hpp"
#include "gmct/expression.hpp"
#include "gmct/reward.hpp"

namespace gmct {

struct FitConfig {
  int restarts = 3;
  double init_value = 1.0;
  int max_iters = 200;  // per restart
  double tol = 1e-9;    // simplex size
  double perturb_scale = 0.5;
  std::uint64_t seed = 0;
};

struct FitResult {
  std::vector<double> constants;
  double mse = 0.0;  // relative RMSE at `constants`; +inf if nothing evaluated
  int evaluations = 0;
};

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

using Objective = std::function<double(std::span<const double>)>;

// Nelder-Mead downhill simplex. Non-finite objective values rank as worst.
SimplexResult nelder_mead(const Objective& f, std::vector<double> start, int max_iters, double tol,
                          double initial_step = 0.5);

// Minimises the relative RMSE over the tree's constant slots with a
// multi-start simplex search; the first start is all `init_value`.
FitResult fit_constants(const SyntaxTree& tree, const TabularDataset& dataset,
                        const FitConfig& fit, const RewardConfig& reward);

}  // namespace gmct
