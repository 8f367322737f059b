#include "gmct/scoring.hpp"

#include <limits>

namespace gmct {

StateScorer::StateScorer(const TabularDataset& dataset, RewardConfig reward, FitConfig fit,
                         bool fit_constants)
    : dataset_(&dataset), reward_(reward), fit_(fit), fit_constants_(fit_constants) {}

const Score& StateScorer::score(const SearchState& state) {
  std::string key = state.tree.prefix_string();
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  ++computations_;
  Score s;
  s.error = std::numeric_limits<double>::infinity();
  if (violates_limits(state.tree, reward_) || !state.done()) {
    // incomplete states only reach the scorer when they cannot be finished
    s.reward = kMinReward;
  } else if (state.tree.n_constants() > 0 && fit_constants_) {
    FitResult fit = fit_constants(state.tree, *dataset_, fit_, reward_);
    s.constants = std::move(fit.constants);
    s.error = fit.mse;
    s.reward = reward_from_error(fit.mse, reward_);
  } else {
    s.constants.assign(static_cast<std::size_t>(state.tree.n_constants()), fit_.init_value);
    EvalResult eval = evaluate(state.tree, dataset_->xs, s.constants);
    if (eval) {
      s.error = relative_rmse(eval.values(), dataset_->y, reward_);
      s.reward = reward_from_error(s.error, reward_);
    } else {
      s.reward = kMinReward;
    }
  }
  return cache_.emplace(std::move(key), std::move(s)).first->second;
}

}  // namespace gmct
