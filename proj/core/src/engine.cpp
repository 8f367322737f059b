#include "gmct/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include "gmct/datagen.hpp"

namespace gmct {

namespace {

bool is_violation(const Grammar& grammar, const SearchState& state, const TreeLimits& limits) {
  if (state.tree.exceeds(limits)) return true;
  return !state.done() && count_legal(legal_actions(grammar, state, limits)) == 0;
}

int pick_action(const std::vector<double>& distribution, const ActionMask& legal, SearchMode mode,
                std::mt19937_64& rng) {
  std::vector<double> weights(distribution.size(), 0.0);
  double total = 0.0;
  for (std::size_t a = 0; a < distribution.size(); ++a) {
    if (legal[a]) {
      weights[a] = distribution[a];
      total += distribution[a];
    }
  }
  if (total <= 0.0) weights = uniform_over(legal);
  if (mode == SearchMode::Test) {
    // lowest rule id wins ties
    return static_cast<int>(std::max_element(weights.begin(), weights.end()) - weights.begin());
  }
  std::discrete_distribution<int> dist(weights.begin(), weights.end());
  return dist(rng);
}

// Once the root is fully explored every edge value is exact, so test mode
// takes the best one (lowest rule id on ties) instead of a visit tie.
int best_explored_action(const SearchNode& root, const ActionMask& legal) {
  int best = -1;
  double best_q = 0.0;
  for (const auto& e : root.edges) {
    if (!legal[static_cast<std::size_t>(e.action)] || e.value_updates == 0) continue;
    if (best < 0 || e.q > best_q || (e.q == best_q && e.action < best)) {
      best = e.action;
      best_q = e.q;
    }
  }
  return best;
}

}  // namespace

EpisodeResult search_equation(const Grammar& grammar, const Guidance& guidance, const TabularDataset& dataset,
                              const EngineConfig& config, SearchMode mode, std::uint64_t seed,
                              StateScorer* scorer, std::optional<int> budget) {
  validate(config.mcts);
  std::unique_ptr<StateScorer> owned;
  if (!scorer) {
    owned = std::make_unique<StateScorer>(dataset, config.reward, config.fit, config.fit_constants);
    scorer = owned.get();
  }
  const TreeLimits& limits = config.reward.limits;
  std::mt19937_64 rng(seed);

  EpisodeResult ep;
  SearchState state = grammar.initial_state(dataset.id);
  ep.states.push_back(state);
  std::unique_ptr<SearchTree> tree;

  while (!state.done() && !is_violation(grammar, state, limits)) {
    int n = sim_schedule(config.mcts.sim_init, state.tree.node_count());
    if (budget) {
      const int remaining = *budget - ep.sims_used;
      if (remaining <= 0) {
        ep.budget_exhausted = true;
        break;
      }
      n = std::min(n, remaining);
    }
    if (!tree || !config.reuse_subtree) {
      tree = std::make_unique<SearchTree>(grammar, guidance, *scorer, config.mcts, state, rng());
    }
    const MctsResult r = tree->run(n);
    if (r.best_reward > ep.best_reward || ep.best_equation.empty()) {
      if (!r.best_prefix.empty()) {
        ep.best_reward = r.best_reward;
        ep.best_equation = r.best_prefix;
        ep.best_constants = r.best_constants;
      }
    }
    ep.explored_states += r.explored_states;
    if (r.solved_at) {
      ep.solved_at = ep.sims_used + *r.solved_at;
      ep.sims_used += r.sims_run;
      break;
    }
    ep.sims_used += r.sims_run;

    const ActionMask legal = legal_actions(grammar, state, limits);
    int action = -1;
    if (mode == SearchMode::Test && tree->fully_explored()) action = best_explored_action(tree->root(), legal);
    if (action < 0) action = pick_action(r.distribution, legal, mode, rng);
    ep.mcts_distributions.push_back(r.distribution);
    ep.actions.push_back(action);
    state = apply_rule(grammar, state, action, limits);
    ep.states.push_back(state);
    if (is_violation(grammar, state, limits)) {
      ep.rewards.push_back(kMinReward);
    } else if (state.done()) {
      ep.rewards.push_back(scorer->score(state).reward);
    } else {
      ep.rewards.push_back(0.0);
    }
    if (config.reuse_subtree) tree->advance(action);
  }

  ep.final_equation = state.tree.prefix_string();
  if (state.done() && !state.tree.exceeds(limits)) {
    const Score& s = scorer->score(state);
    ep.final_reward = s.reward;
    ep.final_constants = s.constants;
  } else if (is_violation(grammar, state, limits)) {
    ep.final_reward = kMinReward;
  }
  return ep;
}

SolveStats solve_problem(const Grammar& grammar, const Guidance& guidance, const TabularDataset& dataset,
                         EngineConfig config, int budget, std::uint64_t seed, double solved_reward,
                         StateScorer* scorer) {
  const auto start = std::chrono::steady_clock::now();
  config.mcts.stop_reward = solved_reward;
  std::unique_ptr<StateScorer> owned;
  if (!scorer) {
    owned = std::make_unique<StateScorer>(dataset, config.reward, config.fit, config.fit_constants);
    scorer = owned.get();
  }
  std::mt19937_64 rng(seed);
  SolveStats stats;
  while (stats.sims < budget) {
    const EpisodeResult ep =
        search_equation(grammar, guidance, dataset, config, SearchMode::Train, rng(), scorer, budget - stats.sims);
    ++stats.episodes;
    stats.explored_states += ep.explored_states;
    if (!ep.best_equation.empty() && (stats.best_equation.empty() || ep.best_reward > stats.best_reward)) {
      stats.best_reward = ep.best_reward;
      stats.best_equation = ep.best_equation;
      stats.best_constants = ep.best_constants;
    }
    if (ep.solved_at) {
      stats.solved = true;
      stats.sims += *ep.solved_at;
      break;
    }
    stats.sims += ep.sims_used;
    if (ep.sims_used == 0) break;
  }
  stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

KBest::KBest(std::size_t k) : k_(k) {
  if (k == 0) throw std::invalid_argument("k must be positive");
}

bool KBest::offer(const Candidate& candidate) {
  auto same = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Candidate& c) { return c.prefix == candidate.prefix; });
  if (same != entries_.end()) {
    if (candidate.reward <= same->reward) return false;
    entries_.erase(same);
  } else if (entries_.size() >= k_ && candidate.reward <= entries_.back().reward) {
    return false;
  }
  auto at = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Candidate& c) { return candidate.reward > c.reward; });
  entries_.insert(at, candidate);
  if (entries_.size() > k_) entries_.pop_back();
  return true;
}

KBest track_kbest(KBest kbest, const Candidate& candidate) {
  kbest.offer(candidate);
  return kbest;
}

void collect_kbest(KBest& kbest, const StateScorer& scorer) {
  // deterministic order regardless of hash layout
  std::vector<std::reference_wrapper<const std::pair<const std::string, Score>>> items(scorer.cache().begin(),
                                                                                        scorer.cache().end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.get().first < b.get().first; });
  for (const auto& item : items) {
    const auto& [prefix, score] = item.get();
    if (!std::isfinite(score.error)) continue;
    kbest.offer({prefix, score.constants, score.reward});
  }
}

namespace {

struct Enumerator {
  const Grammar& grammar;
  StateScorer& scorer;
  const TreeLimits& limits;
  std::size_t max_terminals;
  std::size_t terminals = 0;
  bool overflow = false;

  // Max reward over all leaves below `state`.
  double best(const SearchState& state) {
    if (overflow) return kMinReward;
    if (state.tree.exceeds(limits)) return kMinReward;
    if (state.done()) {
      if (++terminals > max_terminals) overflow = true;
      return scorer.score(state).reward;
    }
    const ActionMask legal = legal_actions(grammar, state, limits);
    double out = kMinReward;
    for (std::size_t a = 0; a < legal.size() && !overflow; ++a) {
      if (legal[a]) out = std::max(out, best(apply_rule(grammar, state, static_cast<int>(a), limits)));
    }
    return out;
  }
};

}  // namespace

std::optional<std::vector<double>> brute_force_q(const Grammar& grammar, const SearchState& state,
                                                 StateScorer& scorer, std::size_t max_terminals) {
  const TreeLimits& limits = scorer.reward_config().limits;
  Enumerator e{grammar, scorer, limits, max_terminals};
  const ActionMask legal = legal_actions(grammar, state, limits);
  std::vector<double> q(legal.size(), 0.0);
  for (std::size_t a = 0; a < legal.size(); ++a) {
    if (!legal[a]) continue;
    q[a] = e.best(apply_rule(grammar, state, static_cast<int>(a), limits));
    if (e.overflow) return std::nullopt;
  }
  return q;
}

std::vector<double> normalize_q(const std::vector<double>& q, const ActionMask& legal) {
  std::vector<double> out(q.size(), 0.0);
  double total = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!legal[a]) continue;
    out[a] = (q[a] + 1.0) / 2.0;
    total += out[a];
  }
  if (total <= 0.0) return uniform_over(legal);
  for (auto& v : out) v /= total;
  return out;
}

std::vector<PriorRow> dump_priors(const Grammar& grammar, const Guidance& guidance,
                                  const std::vector<PriorProblem>& problems, const std::vector<SearchState>& states,
                                  const EngineConfig& config, std::size_t brute_force_limit) {
  std::vector<PriorRow> rows;
  for (const auto& problem : problems) {
    if (!problem.dataset) throw std::invalid_argument("prior problem without dataset");
    StateScorer scorer(*problem.dataset, config.reward, config.fit, config.fit_constants);
    for (const auto& state : states) {
      PriorRow row;
      row.problem = problem.id;
      row.state = state.tree.prefix_string();
      const ActionMask legal = legal_actions(grammar, state, config.reward.limits);
      row.prior = guidance.predict(state, *problem.dataset, legal).prior;
      if (brute_force_limit > 0) {
        auto q = brute_force_q(grammar, state, scorer, brute_force_limit);
        if (q) {
          row.qsa = normalize_q(*q, legal);
        } else {
          row.notice = "brute force skipped: more than " + std::to_string(brute_force_limit) + " terminals";
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace gmct
