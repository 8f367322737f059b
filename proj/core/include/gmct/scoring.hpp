#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gmct/fitting.hpp"
#include "gmct/reward.hpp"

namespace gmct {

struct Score {
  double reward = 0.0;
  double error = 0.0;  // relative RMSE, +inf for violations/failures
  std::vector<double> constants;
};

// Rewards terminal and constraint-violating states for one dataset, fitting
// constants for complete trees and caching by prefix string. Not thread-safe;
// use one scorer per search.
class StateScorer {
 public:
  StateScorer(const TabularDataset& dataset, RewardConfig reward, FitConfig fit = {},
              bool fit_constants = true);

  const Score& score(const SearchState& state);
  // Reward for a state that cannot be completed within the limits.
  static constexpr double violation_reward() noexcept { return kMinReward; }

  const TabularDataset& dataset() const noexcept { return *dataset_; }
  const RewardConfig& reward_config() const noexcept { return reward_; }
  std::size_t computations() const noexcept { return computations_; }
  std::size_t cache_size() const noexcept { return cache_.size(); }
  const std::unordered_map<std::string, Score>& cache() const noexcept { return cache_; }

 private:
  const TabularDataset* dataset_;
  RewardConfig reward_;
  FitConfig fit_;
  bool fit_constants_;
  std::size_t computations_ = 0;
  std::unordered_map<std::string, Score> cache_;
};

}  // namespace gmct
