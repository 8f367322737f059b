#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gmct/dataset.hpp"
#include "gmct/fitting.hpp"
#include "gmct/grammar.hpp"
#include "gmct/mcts.hpp"
#include "gmct/prior.hpp"
#include "gmct/reward.hpp"
#include "gmct/scoring.hpp"

namespace gmct {

enum class SearchMode { Train, Test };

struct EngineConfig {
  MctsConfig mcts;
  RewardConfig reward;
  FitConfig fit;
  bool fit_constants = true;   // fit at every terminal reward; off scores constants at init_value
  bool reuse_subtree = false;  // keep the chosen child's statistics between outer steps
};

struct EpisodeResult {
  std::vector<SearchState> states;  // states[0] is the start state
  std::vector<std::vector<double>> mcts_distributions;
  std::vector<double> rewards;  // reward of the state reached at each step
  std::vector<int> actions;
  std::string final_equation;
  std::vector<double> final_constants;
  double final_reward = 0.0;
  int sims_used = 0;
  int explored_states = 0;
  // Best leaf scored by any inner search of the episode.
  std::string best_equation;
  std::vector<double> best_constants;
  double best_reward = -1.0;
  std::optional<int> solved_at;  // cumulative simulation index inside the episode
  bool budget_exhausted = false;
};

// One outer episode: repeated inner searches from the current state, each
// with sim_schedule(sim_init, node_count) simulations, until the state is
// complete or violates the limits. With mcts.stop_reward set the episode
// ends as soon as a leaf beats it. `scorer` may be shared between episodes
// on the same dataset; `budget` caps the simulations used.
EpisodeResult search_equation(const Grammar& grammar, const Guidance& guidance, const TabularDataset& dataset,
                              const EngineConfig& config, SearchMode mode, std::uint64_t seed,
                              StateScorer* scorer = nullptr, std::optional<int> budget = std::nullopt);

struct SolveStats {
  bool solved = false;
  int sims = 0;  // cumulative inner simulations until the solving leaf (or all used)
  int explored_states = 0;
  int episodes = 0;
  double best_reward = -1.0;
  std::string best_equation;
  std::vector<double> best_constants;
  double wall_ms = 0.0;
};

// Train-mode episodes on one dataset until a leaf scores above
// `solved_reward` or `budget` simulations are spent. Pass `scorer` to keep
// the scored equations afterwards.
SolveStats solve_problem(const Grammar& grammar, const Guidance& guidance, const TabularDataset& dataset,
                         EngineConfig config, int budget, std::uint64_t seed, double solved_reward = kSolvedReward,
                         StateScorer* scorer = nullptr);

struct Candidate {
  std::string prefix;
  std::vector<double> constants;
  double reward = -1.0;
};

class KBest {
 public:
  explicit KBest(std::size_t k);
  // Returns true if the set changed.
  bool offer(const Candidate& candidate);
  const std::vector<Candidate>& entries() const noexcept { return entries_; }
  std::size_t k() const noexcept { return k_; }

 private:
  std::size_t k_;
  std::vector<Candidate> entries_;
};

KBest track_kbest(KBest kbest, const Candidate& candidate);
// Complete trees scored so far by `scorer`.
void collect_kbest(KBest& kbest, const StateScorer& scorer);

struct PriorProblem {
  std::string id;
  const TabularDataset* dataset = nullptr;
};

struct PriorRow {
  std::string problem;
  std::string state;
  std::vector<double> prior;  // masked prior per rule id
  std::optional<std::vector<double>> qsa;  // brute-force normalized Q per rule id
  std::string notice;
};

// Max reward below each legal action of `state`, found by enumerating all
// completions within the limits. nullopt if more than `max_terminals` exist.
std::optional<std::vector<double>> brute_force_q(const Grammar& grammar, const SearchState& state,
                                                 StateScorer& scorer, std::size_t max_terminals);

// Q mapped to [0, 1] via (q + 1) / 2 and normalized over the legal actions.
std::vector<double> normalize_q(const std::vector<double>& q, const ActionMask& legal);

std::vector<PriorRow> dump_priors(const Grammar& grammar, const Guidance& guidance,
                                  const std::vector<PriorProblem>& problems,
                                  const std::vector<SearchState>& states, const EngineConfig& config,
                                  std::size_t brute_force_limit = 5000);

}  // namespace gmct
