#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gmct/expression.hpp"
#include "gmct/symbol.hpp"

namespace gmct {

class GrammarError : public std::runtime_error {
 public:
  GrammarError(const std::string& what, int line, int column);
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

class IllegalAction : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ProductionRule {
  int id = 0;
  int lhs = 0;  // nonterminal index
  std::vector<Symbol> rhs;
  double weight = 1.0;
  int line = 0;

  // Change in node count when this rule replaces its lhs leaf.
  int growth() const noexcept { return static_cast<int>(rhs.size()) - 1; }
};

using ActionMask = std::vector<bool>;

// Immutable context-free grammar with per-rule weights. Rule ids are the
// action indices of the search (0-based, file order after `|` desugaring).
class Grammar {
 public:
  static Grammar parse(std::string_view text);
  static Grammar load(const std::filesystem::path& path);

  const std::vector<ProductionRule>& rules() const noexcept { return rules_; }
  const ProductionRule& rule(int id) const { return rules_.at(static_cast<std::size_t>(id)); }
  int num_rules() const noexcept { return static_cast<int>(rules_.size()); }
  std::span<const int> rules_for(int nonterminal) const {
    return rule_index_.at(static_cast<std::size_t>(nonterminal));
  }

  const std::vector<std::string>& nonterminals() const noexcept { return nonterminals_; }
  int nonterminal_index(std::string_view name) const noexcept;
  int start() const noexcept { return start_; }
  Symbol start_symbol() const { return make_nonterminal(nonterminals_[static_cast<std::size_t>(start_)], start_); }

  // Number of input variables referenced (max x-index + 1).
  int num_variables() const noexcept { return num_variables_; }
  // All distinct symbol names: nonterminals first, then terminals in order of appearance.
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  int vocabulary_index(std::string_view name) const noexcept;

  SearchState initial_state(std::string dataset_id = {}) const;
  std::string rule_string(int id) const;

  int sample_rule(int nonterminal, std::mt19937_64& rng) const;

 private:
  std::vector<ProductionRule> rules_;
  std::vector<std::vector<int>> rule_index_;
  std::vector<std::string> nonterminals_;
  std::vector<std::string> vocabulary_;
  int start_ = 0;
  int num_variables_ = 0;
};

// mask[i] holds iff rule i rewrites the leftmost nonterminal of `state` and
// does not push the tree past limits.max_nodes. Complete states get all-false.
ActionMask legal_actions(const Grammar& grammar, const SearchState& state,
                         const TreeLimits& limits = {});

int count_legal(const ActionMask& mask) noexcept;

// Rewrites the leftmost nonterminal with rule `rule_id`. Throws IllegalAction
// if the rule is not legal in `state`.
SearchState apply_rule(const Grammar& grammar, const SearchState& state, int rule_id,
                       const TreeLimits& limits = {});

}  // namespace gmct
