#pragma once

#include <optional>
#include <span>
#include <stdexcept>

#include "gmct/dataset.hpp"
#include "gmct/expression.hpp"

namespace gmct {

enum class Normalization { Std, Range, None };

struct RewardConfig {
  TreeLimits limits{};
  double mse_cutoff = 2.0;
  Normalization normalization = Normalization::Std;
  double epsilon = 1e-12;
};

inline constexpr double kMinReward = -1.0;
inline constexpr double kSolvedReward = 0.999;

// Relative RMSE. With Std normalization:
//   sqrt( sum (y_calc - y)^2 / (|D| * max(Var(y), eps)) )
// so predicting the mean of y scores exactly 1.
double relative_rmse(std::span<const double> y_calc, std::span<const double> y_true,
                     const RewardConfig& config);

// Maps a complete tree's error to a reward: -1 beyond the cutoff, 1 - error otherwise.
double reward_from_error(double error, const RewardConfig& config) noexcept;

// Depth, constant or node limit exceeded.
bool violates_limits(const SyntaxTree& tree, const RewardConfig& config) noexcept;

// Reward for any search state. Complete trees with constant slots are fitted
// first unless `constants` is supplied.
double compute_reward(const SearchState& state, const TabularDataset& dataset,
                      const RewardConfig& config,
                      std::optional<std::span<const double>> constants = std::nullopt);

}  // namespace gmct
