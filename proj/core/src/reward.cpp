#include "gmct/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmct/fitting.hpp"

namespace gmct {

double relative_rmse(std::span<const double> y_calc, std::span<const double> y_true,
                     const RewardConfig& config) {
  if (y_calc.size() != y_true.size() || y_true.empty()) {
    throw std::invalid_argument("relative_rmse: length mismatch");
  }
  const double n = static_cast<double>(y_true.size());
  double sse = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    double d = y_calc[i] - y_true[i];
    sse += d * d;
  }
  const double rmse = std::sqrt(sse / n);
  switch (config.normalization) {
    case Normalization::None:
      return rmse;
    case Normalization::Range: {
      auto [lo, hi] = std::minmax_element(y_true.begin(), y_true.end());
      return rmse / std::max(*hi - *lo, config.epsilon);
    }
    case Normalization::Std:
      break;
  }
  const double mean = std::accumulate(y_true.begin(), y_true.end(), 0.0) / n;
  double var = 0.0;
  for (double v : y_true) var += (v - mean) * (v - mean);
  var /= n;
  return std::sqrt(sse / (n * std::max(var, config.epsilon)));
}

double reward_from_error(double error, const RewardConfig& config) noexcept {
  if (!(error <= config.mse_cutoff)) return kMinReward;
  return 1.0 - error;
}

bool violates_limits(const SyntaxTree& tree, const RewardConfig& config) noexcept {
  return tree.exceeds(config.limits);
}

double compute_reward(const SearchState& state, const TabularDataset& dataset,
                      const RewardConfig& config, std::optional<std::span<const double>> constants) {
  if (violates_limits(state.tree, config)) return kMinReward;
  if (!state.done()) return 0.0;

  if (!constants && state.tree.n_constants() > 0) {
    FitResult fit = fit_constants(state.tree, dataset, FitConfig{}, config);
    return reward_from_error(fit.mse, config);
  }
  std::span<const double> values = constants ? *constants : std::span<const double>{};
  EvalResult eval = evaluate(state.tree, dataset.xs, values);
  if (!eval) return kMinReward;
  return reward_from_error(relative_rmse(eval.values(), dataset.y, config), config);
}

}  // namespace gmct
