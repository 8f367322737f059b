#include "gmct/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gmct {

void validate(const MctsConfig& config) {
  if (!(config.c_puct > 0.0)) throw std::invalid_argument("c_puct must be positive");
  if (config.sim_init < 10) throw std::invalid_argument("sim_init must be at least 10");
  if (!(config.discount > 0.0 && config.discount <= 1.0)) {
    throw std::invalid_argument("discount must lie in (0, 1]");
  }
}

const Edge* SearchNode::edge_for(int action) const noexcept {
  for (const auto& e : edges) {
    if (e.action == action) return &e;
  }
  return nullptr;
}

double puct_score(double q, double prior, int node_visits, int edge_visits, double c) noexcept {
  return q + c * prior * std::sqrt(static_cast<double>(node_visits) + 1.0) /
                 (static_cast<double>(edge_visits) + 1.0);
}

double puct_score(const SearchNode& node, const Edge& edge, double c) noexcept {
  return puct_score(edge.q, edge.prior, node.visit_count, edge.visits, c);
}

namespace {

template <typename Filter>
int argmax_puct(const SearchNode& node, double c, TieBreak tie_break, std::mt19937_64* rng,
                Filter keep) {
  double best = -std::numeric_limits<double>::infinity();
  int chosen = -1;
  int ties = 0;
  for (int i = 0; i < static_cast<int>(node.edges.size()); ++i) {
    const Edge& e = node.edges[static_cast<std::size_t>(i)];
    if (!keep(e)) continue;
    const double score = puct_score(node, e, c);
    if (chosen < 0 || score > best) {
      best = score;
      chosen = i;
      ties = 1;
    } else if (score == best && tie_break == TieBreak::Random && rng != nullptr) {
      // reservoir sampling over tied edges
      ++ties;
      if (std::uniform_int_distribution<int>(0, ties - 1)(*rng) == 0) chosen = i;
    }
  }
  return chosen;
}

}  // namespace

int select_puct(const SearchNode& node, double c, TieBreak tie_break, std::mt19937_64* rng) {
  return argmax_puct(node, c, tie_break, rng, [](const Edge&) { return true; });
}

std::optional<AmexChoice> amex_select(const SearchNode& node, double c, TieBreak tie_break,
                                      std::mt19937_64* rng) {
  const int open = argmax_puct(node, c, tie_break, rng, [](const Edge& e) { return !e.fully_explored; });
  if (open < 0) return std::nullopt;
  AmexChoice choice;
  choice.select = open;
  choice.max = select_puct(node, c, tie_break, rng);
  // a tie between the followed edge and another best edge credits the followed one
  if (choice.max != open &&
      puct_score(node, node.edges[static_cast<std::size_t>(open)], c) ==
          puct_score(node, node.edges[static_cast<std::size_t>(choice.max)], c)) {
    choice.max = open;
  }
  return choice;
}

double value_estimate(const SearchNode& node) noexcept {
  if (node.terminal_reward) return *node.terminal_reward;
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& e : node.edges) {
    if (e.value_updates > 0) {
      best = std::max(best, e.q);
      any = true;
    }
  }
  return any ? best : 0.0;
}

namespace {

void refresh_exploration(std::vector<SearchNode>& nodes, SearchNode& node, Edge& edge) {
  if (edge.child >= 0) edge.fully_explored = nodes[static_cast<std::size_t>(edge.child)].fully_explored;
  if (node.kind != LeafKind::Open) {
    node.fully_explored = true;
    return;
  }
  node.fully_explored = node.expanded && std::all_of(node.edges.begin(), node.edges.end(),
                                                     [](const Edge& e) { return e.fully_explored; });
}

void fold(Edge& edge, double value, Backprop mode) {
  ++edge.value_updates;
  if (mode == Backprop::Mean) {
    edge.q += (value - edge.q) / static_cast<double>(edge.value_updates);
  } else {
    edge.q = edge.value_updates == 1 ? value : std::max(edge.q, value);
  }
}

void backprop_impl(std::vector<SearchNode>& nodes, std::span<const PathStep> path, int leaf, double value,
                   double discount, Backprop mode, bool amex_gate) {
  SearchNode& leaf_node = nodes[static_cast<std::size_t>(leaf)];
  ++leaf_node.visit_count;
  if (leaf_node.kind != LeafKind::Open) leaf_node.fully_explored = true;

  bool propagate = true;
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    SearchNode& node = nodes[static_cast<std::size_t>(it->node)];
    Edge& followed = node.edges[static_cast<std::size_t>(it->select)];
    ++node.visit_count;
    ++node.edges[static_cast<std::size_t>(it->max)].visits;
    if (propagate) fold(followed, value, mode);
    if (amex_gate && propagate && it->select != it->max) {
      const Edge& credited = node.edges[static_cast<std::size_t>(it->max)];
      const double estimate = credited.child >= 0
                                  ? value_estimate(nodes[static_cast<std::size_t>(credited.child)])
                                  : credited.q;
      if (!(value > estimate)) propagate = false;
    }
    refresh_exploration(nodes, node, followed);
    value *= discount;
  }
}

}  // namespace

void backprop_mean(std::vector<SearchNode>& nodes, std::span<const PathStep> path, int leaf, double value,
                   double discount) {
  backprop_impl(nodes, path, leaf, value, discount, Backprop::Mean, false);
}

void backprop_max(std::vector<SearchNode>& nodes, std::span<const PathStep> path, int leaf, double value,
                  double discount) {
  backprop_impl(nodes, path, leaf, value, discount, Backprop::Max, false);
}

void amex_backprop(std::vector<SearchNode>& nodes, std::span<const PathStep> path, int leaf, double value,
                   const MctsConfig& config) {
  backprop_impl(nodes, path, leaf, value, config.discount, config.backprop, true);
}

int sim_schedule(int sim_init, int tree_node_count) noexcept {
  const double scaled = static_cast<double>(sim_init) * std::pow(4.0, -(tree_node_count - 2));
  return std::max(static_cast<int>(std::floor(scaled)), 10);
}

SearchTree::SearchTree(const Grammar& grammar, const Guidance& guidance, StateScorer& scorer,
                       MctsConfig config, SearchState root, std::uint64_t seed)
    : grammar_(&grammar), guidance_(&guidance), scorer_(&scorer), config_(config), rng_(seed) {
  SearchNode node;
  node.state = std::move(root);
  const auto& limits = scorer_->reward_config().limits;
  if (node.state.tree.exceeds(limits)) {
    node.kind = LeafKind::Violation;
  } else if (node.state.done()) {
    node.kind = LeafKind::Terminal;
  }
  nodes_.push_back(std::move(node));
}

void SearchTree::expand(int index) {
  SearchNode& node = nodes_[static_cast<std::size_t>(index)];
  node.expanded = true;
  ActionMask legal = legal_actions(*grammar_, node.state, scorer_->reward_config().limits);
  if (count_legal(legal) == 0) {
    node.kind = LeafKind::Violation;
    return;
  }
  Prediction pred = guidance_->predict(node.state, scorer_->dataset(), legal);
  double total = 0.0;
  for (std::size_t a = 0; a < legal.size(); ++a) {
    if (legal[a]) total += std::max(pred.prior[a], 0.0);
  }
  node.critic_value = pred.value;
  for (std::size_t a = 0; a < legal.size(); ++a) {
    if (!legal[a]) continue;
    Edge e;
    e.action = static_cast<int>(a);
    e.prior = total > 0.0 ? std::max(pred.prior[a], 0.0) / total : 1.0 / count_legal(legal);
    node.edges.push_back(e);
  }
}

int SearchTree::add_child(int parent, int edge_index) {
  const auto& limits = scorer_->reward_config().limits;
  SearchNode child;
  {
    const SearchNode& p = nodes_[static_cast<std::size_t>(parent)];
    child.state = apply_rule(*grammar_, p.state, p.edges[static_cast<std::size_t>(edge_index)].action, limits);
  }
  if (child.state.tree.exceeds(limits)) {
    child.kind = LeafKind::Violation;
  } else if (child.state.done()) {
    child.kind = LeafKind::Terminal;
  }
  nodes_.push_back(std::move(child));
  const int id = static_cast<int>(nodes_.size()) - 1;
  nodes_[static_cast<std::size_t>(parent)].edges[static_cast<std::size_t>(edge_index)].child = id;
  return id;
}

double SearchTree::leaf_value(int index) {
  SearchNode& node = nodes_[static_cast<std::size_t>(index)];
  if (node.terminal_reward) return *node.terminal_reward;
  double reward = kMinReward;
  if (node.kind == LeafKind::Terminal) {
    reward = scorer_->score(node.state).reward;
    ++terminals_found_;
  }
  node.terminal_reward = reward;
  scored_leaves_.push_back(index);
  if (best_leaf_ < 0 || reward > best_reward_) {
    best_reward_ = reward;
    best_leaf_ = index;
  }
  return reward;
}

int SearchTree::simulate() {
  path_.clear();
  int current = 0;
  for (;;) {
    SearchNode& node = nodes_[static_cast<std::size_t>(current)];
    if (node.kind != LeafKind::Open) break;
    if (!node.expanded) {
      expand(current);
      if (nodes_[static_cast<std::size_t>(current)].kind != LeafKind::Open) break;
    }
    const SearchNode& n = nodes_[static_cast<std::size_t>(current)];
    PathStep step{current, 0, 0};
    if (config_.variant == Variant::AmEx) {
      auto choice = amex_select(n, config_.c_puct, config_.tie_break, &rng_);
      if (!choice) break;  // only reachable for a fully explored root
      step.select = choice->select;
      step.max = choice->max;
    } else {
      step.select = step.max = select_puct(n, config_.c_puct, config_.tie_break, &rng_);
    }
    int child = n.edges[static_cast<std::size_t>(step.select)].child;
    if (child < 0) child = add_child(current, step.select);
    path_.push_back(step);
    current = child;
  }

  const double value = leaf_value(current);
  if (config_.variant == Variant::AmEx) {
    amex_backprop(nodes_, path_, current, value, config_);
  } else if (config_.backprop == Backprop::Mean) {
    backprop_mean(nodes_, path_, current, value, config_.discount);
  } else {
    backprop_max(nodes_, path_, current, value, config_.discount);
  }
  ++sims_run_;
  if (config_.stop_reward && !solved_at_ && value > *config_.stop_reward) solved_at_ = sims_run_;
  return current;
}

std::vector<double> SearchTree::visit_distribution() const {
  std::vector<double> out(static_cast<std::size_t>(grammar_->num_rules()), 0.0);
  const SearchNode& r = root();
  double total = 0.0;
  for (const auto& e : r.edges) total += e.visits;
  for (const auto& e : r.edges) {
    out[static_cast<std::size_t>(e.action)] =
        total > 0.0 ? e.visits / total : 1.0 / static_cast<double>(r.edges.size());
  }
  return out;
}

MctsResult SearchTree::run(int n_sims) {
  const int start = sims_run_;
  solved_at_.reset();
  for (int i = 0; i < n_sims; ++i) {
    if (config_.variant == Variant::AmEx && fully_explored()) break;
    if (root().kind != LeafKind::Open) {
      if (sims_run_ == 0) simulate();
      break;
    }
    simulate();
    if (solved_at_) break;
  }
  if (root().kind == LeafKind::Open && !root().expanded) expand(0);

  MctsResult result;
  result.distribution = visit_distribution();
  result.sims_run = sims_run_ - start;
  result.explored_states = static_cast<int>(nodes_.size());
  result.terminals_found = terminals_found_;
  result.fully_explored = fully_explored();
  if (solved_at_) result.solved_at = *solved_at_ - start;
  if (best_leaf_ >= 0) {
    const SearchNode& leaf = nodes_[static_cast<std::size_t>(best_leaf_)];
    result.best_reward = best_reward_;
    result.best_prefix = leaf.state.tree.prefix_string();
    if (leaf.kind == LeafKind::Terminal) result.best_constants = scorer_->score(leaf.state).constants;
  }
  return result;
}

void SearchTree::advance(int action) {
  const Edge* edge = root().edge_for(action);
  const auto& limits = scorer_->reward_config().limits;
  std::vector<SearchNode> kept;
  if (edge == nullptr || edge->child < 0) {
    SearchNode node;
    node.state = apply_rule(*grammar_, root().state, action, limits);
    if (node.state.tree.exceeds(limits)) {
      node.kind = LeafKind::Violation;
    } else if (node.state.done()) {
      node.kind = LeafKind::Terminal;
    }
    kept.push_back(std::move(node));
  } else {
    // breadth-first copy with index remapping
    std::vector<int> order{edge->child};
    std::vector<int> remap(nodes_.size(), -1);
    remap[static_cast<std::size_t>(edge->child)] = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (const auto& e : nodes_[static_cast<std::size_t>(order[i])].edges) {
        if (e.child < 0) continue;
        remap[static_cast<std::size_t>(e.child)] = static_cast<int>(order.size());
        order.push_back(e.child);
      }
    }
    kept.reserve(order.size());
    for (int old : order) {
      SearchNode n = std::move(nodes_[static_cast<std::size_t>(old)]);
      for (auto& e : n.edges) {
        if (e.child >= 0) e.child = remap[static_cast<std::size_t>(e.child)];
      }
      kept.push_back(std::move(n));
    }
  }
  nodes_ = std::move(kept);
  scored_leaves_.clear();
  best_leaf_ = -1;
  best_reward_ = -1.0;
  solved_at_.reset();
}

MctsResult run_mcts(const Grammar& grammar, const SearchState& root, const Guidance& guidance,
                    const MctsConfig& config, int n_sims, StateScorer& scorer, std::uint64_t seed) {
  SearchTree tree(grammar, guidance, scorer, config, root, seed);
  return tree.run(n_sims);
}

}  // namespace gmct
