#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gmct/grammar.hpp"
#include "gmct/prior.hpp"
#include "gmct/scoring.hpp"

namespace gmct {

enum class Variant { Classic, AmEx };
enum class Backprop { Mean, Max };
enum class TieBreak { LowestId, Random };

struct MctsConfig {
  Variant variant = Variant::AmEx;
  Backprop backprop = Backprop::Max;
  double c_puct = 10.0;
  int sim_init = 160;
  double discount = 1.0;
  TieBreak tie_break = TieBreak::LowestId;
  // Stop the search as soon as a leaf scores above this reward.
  std::optional<double> stop_reward;
};

void validate(const MctsConfig& config);

struct Edge {
  int action = 0;
  int child = -1;
  int visits = 0;         // |Ssa|
  int value_updates = 0;  // number of values folded into q
  double q = 0.0;
  double prior = 0.0;
  bool fully_explored = false;
};

enum class LeafKind { Open, Terminal, Violation };

struct SearchNode {
  SearchState state;
  LeafKind kind = LeafKind::Open;
  int visit_count = 1;  // creation visit plus one per simulation through the node
  bool expanded = false;
  bool fully_explored = false;
  double critic_value = 0.0;
  std::optional<double> terminal_reward;
  std::vector<Edge> edges;

  int passes() const noexcept { return visit_count - 1; }
  const Edge* edge_for(int action) const noexcept;
};

// Q + c * P * sqrt(|S| + 1) / (|Ssa| + 1)
double puct_score(double q, double prior, int node_visits, int edge_visits, double c) noexcept;
double puct_score(const SearchNode& node, const Edge& edge, double c) noexcept;

// Edge index with the highest PUCT score; ties resolved by `tie_break`.
int select_puct(const SearchNode& node, double c, TieBreak tie_break, std::mt19937_64* rng);

struct AmexChoice {
  int select = -1;  // edge followed
  int max = -1;     // edge whose visit count increments
};

// nullopt when every edge is fully explored.
std::optional<AmexChoice> amex_select(const SearchNode& node, double c, TieBreak tie_break,
                                      std::mt19937_64* rng);

// Value estimate of a node: its terminal reward, else its best updated edge Q.
double value_estimate(const SearchNode& node) noexcept;

struct PathStep {
  int node = 0;
  int select = 0;  // edge index followed
  int max = 0;     // edge index credited with the visit
};

// Folds a leaf value into the path. `leaf` is the node the path ends in.
void backprop_mean(std::vector<SearchNode>& nodes, std::span<const PathStep> path, int leaf,
                   double value, double discount = 1.0);
void backprop_max(std::vector<SearchNode>& nodes, std::span<const PathStep> path, int leaf,
                  double value, double discount = 1.0);
void amex_backprop(std::vector<SearchNode>& nodes, std::span<const PathStep> path, int leaf,
                   double value, const MctsConfig& config);

// max(floor(sim_init * 4^-(n-2)), 10)
int sim_schedule(int sim_init, int tree_node_count) noexcept;

struct MctsResult {
  std::vector<double> distribution;  // root visit distribution over all rule ids
  int sims_run = 0;
  int explored_states = 0;
  int terminals_found = 0;
  double best_reward = -1.0;
  std::string best_prefix;
  std::vector<double> best_constants;
  bool fully_explored = false;
  // simulation index (1-based, within this run) at which stop_reward was exceeded
  std::optional<int> solved_at;
};

// One search tree rooted at a state. Single-writer.
class SearchTree {
 public:
  SearchTree(const Grammar& grammar, const Guidance& guidance, StateScorer& scorer,
             MctsConfig config, SearchState root, std::uint64_t seed = 0);

  // Runs up to n_sims simulations; stops early on a full exploration (AmEx)
  // or when config.stop_reward is exceeded.
  MctsResult run(int n_sims);
  // One root-to-leaf simulation. Returns the leaf node index.
  int simulate();
  // Re-roots the tree at the child reached by `action`, keeping its statistics.
  void advance(int action);

  const std::vector<SearchNode>& nodes() const noexcept { return nodes_; }
  const SearchNode& root() const noexcept { return nodes_.front(); }
  std::vector<double> visit_distribution() const;
  bool fully_explored() const noexcept { return nodes_.front().fully_explored; }
  int terminals_found() const noexcept { return terminals_found_; }
  // Leaf indices scored so far, in discovery order.
  const std::vector<int>& scored_leaves() const noexcept { return scored_leaves_; }
  const MctsConfig& config() const noexcept { return config_; }

 private:
  void expand(int index);
  int add_child(int parent, int edge);
  double leaf_value(int index);

  const Grammar* grammar_;
  const Guidance* guidance_;
  StateScorer* scorer_;
  MctsConfig config_;
  std::mt19937_64 rng_;
  std::vector<SearchNode> nodes_;
  std::vector<PathStep> path_;
  std::vector<int> scored_leaves_;
  int terminals_found_ = 0;
  double best_reward_ = -1.0;
  int best_leaf_ = -1;
  int sims_run_ = 0;
  std::optional<int> solved_at_;
};

MctsResult run_mcts(const Grammar& grammar, const SearchState& root, const Guidance& guidance,
                    const MctsConfig& config, int n_sims, StateScorer& scorer, std::uint64_t seed = 0);

}  // namespace gmct
