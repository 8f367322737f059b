#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gmct/symbol.hpp"

namespace gmct {

struct TreeLimits {
  int max_nodes = 25;
  int max_depth = 10;
  int max_constants = 5;
};

struct TreeMetrics {
  int node_count = 0;
  int depth = 0;
  int n_constants = 0;

  friend bool operator==(const TreeMetrics&, const TreeMetrics&) = default;
};

struct TreeNode {
  Symbol symbol;
  std::array<int, 2> children{-1, -1};
  int depth = 0;
};

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Syntax tree stored as a prefix-ordered arena. Node 0 is always the `y`
// assignment root; its single child is the expression (or start symbol).
// Values are immutable once constructed; edits return new trees.
class SyntaxTree {
 public:
  SyntaxTree() = default;

  static SyntaxTree initial(const Symbol& start);
  // Builds a tree from expression tokens (no leading `y`). Throws TreeError
  // unless the tokens form exactly one complete prefix expression.
  static SyntaxTree from_prefix(std::span<const Symbol> expression);
  static SyntaxTree from_prefix(std::string_view text);

  std::vector<std::string> to_prefix() const;
  std::string prefix_string() const;

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  // Expression symbols in prefix order, excluding the `y` root.
  std::vector<Symbol> expression_symbols() const;

  const std::vector<int>& constant_slots() const noexcept { return constant_slots_; }
  int node_count() const noexcept { return static_cast<int>(nodes_.size()); }
  int depth() const noexcept { return depth_; }
  int n_constants() const noexcept { return static_cast<int>(constant_slots_.size()); }
  TreeMetrics metrics() const noexcept { return {node_count(), depth_, n_constants()}; }

  // Leftmost nonterminal leaf in prefix order.
  std::optional<int> leftmost_nonterminal() const noexcept { return leftmost_nonterminal_; }
  bool done() const noexcept { return !leftmost_nonterminal_.has_value(); }
  bool contains_operator(OpCode op) const noexcept;
  bool exceeds(const TreeLimits& limits) const noexcept;

  // Replaces leaf `node` by the prefix subtree `replacement`.
  SyntaxTree replace_leaf(int node, std::span<const Symbol> replacement) const;

  friend bool operator==(const SyntaxTree& a, const SyntaxTree& b);

 private:
  explicit SyntaxTree(std::vector<Symbol> symbols);
  void rebuild();

  std::vector<TreeNode> nodes_;
  std::vector<int> constant_slots_;
  std::optional<int> leftmost_nonterminal_;
  int depth_ = 0;
};

struct SearchState {
  SyntaxTree tree;
  std::string dataset_id;

  bool done() const noexcept { return tree.done(); }
};

struct EvalFailure {
  enum class Cause {
    Domain,
    DivisionByZero,
    NonFinite,
    Overflow,
    UnknownVariable,
    Incomplete,
    ConstantCount,
  };
  Cause cause = Cause::NonFinite;
  int row = 0;

  std::string describe() const;
};

// Either every row evaluated or a failure; never partial output.
class EvalResult {
 public:
  static EvalResult success(std::vector<double> values) {
    EvalResult r;
    r.values_ = std::move(values);
    return r;
  }
  static EvalResult fail(EvalFailure failure) {
    EvalResult r;
    r.failure_ = failure;
    return r;
  }

  bool ok() const noexcept { return !failure_.has_value(); }
  explicit operator bool() const noexcept { return ok(); }
  const std::vector<double>& values() const { return values_; }
  const EvalFailure& failure() const { return *failure_; }

 private:
  std::vector<double> values_;
  std::optional<EvalFailure> failure_;
};

inline constexpr double kOverflowGuard = 1e300;

// Evaluates on every row of `xs` (rows × variables). Constants are consumed in
// prefix order of the `c` slots.
EvalResult evaluate(const SyntaxTree& tree, const Eigen::MatrixXd& xs,
                    std::span<const double> constants);

// Prefix string with every `c` replaced by the given constant values.
std::string instantiate(const SyntaxTree& tree, std::span<const double> constants);

std::vector<std::string> split_tokens(std::string_view text);

}  // namespace gmct
