#include "gmct/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace gmct {

SyntaxTree::SyntaxTree(std::vector<Symbol> symbols) {
  nodes_.reserve(symbols.size());
  for (auto& s : symbols) nodes_.push_back(TreeNode{std::move(s), {-1, -1}, 0});
  rebuild();
}

SyntaxTree SyntaxTree::initial(const Symbol& start) {
  return SyntaxTree(std::vector<Symbol>{make_root(), start});
}

SyntaxTree SyntaxTree::from_prefix(std::span<const Symbol> expression) {
  std::vector<Symbol> symbols;
  symbols.reserve(expression.size() + 1);
  symbols.push_back(make_root());
  symbols.insert(symbols.end(), expression.begin(), expression.end());
  return SyntaxTree(std::move(symbols));
}

SyntaxTree SyntaxTree::from_prefix(std::string_view text) {
  std::vector<Symbol> symbols;
  for (const auto& token : split_tokens(text)) symbols.push_back(classify_token(token));
  return from_prefix(symbols);
}

// Recomputes child links, depths and derived bookkeeping from the prefix order.
void SyntaxTree::rebuild() {
  constant_slots_.clear();
  leftmost_nonterminal_.reset();
  depth_ = 0;
  if (nodes_.empty() || nodes_.front().symbol.kind != SymbolKind::Root) {
    throw TreeError("syntax tree must start with the y root");
  }

  struct Open {
    int node;
    int filled;
  };
  std::vector<Open> stack;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    n.children = {-1, -1};
    if (i > 0) {
      if (stack.empty()) throw TreeError("trailing tokens after a complete expression");
      auto& parent = stack.back();
      auto& pnode = nodes_[static_cast<std::size_t>(parent.node)];
      pnode.children[static_cast<std::size_t>(parent.filled)] = i;
      n.depth = pnode.depth + 1;
      if (++parent.filled == pnode.symbol.arity) stack.pop_back();
    } else {
      n.depth = 0;
    }
    if (i > 0 && n.symbol.kind == SymbolKind::Root) throw TreeError("y may only appear at the root");
    depth_ = std::max(depth_, n.depth);
    if (n.symbol.kind == SymbolKind::ConstantSlot) {
      n.symbol.index = static_cast<int>(constant_slots_.size());
      constant_slots_.push_back(i);
    }
    if (n.symbol.is_nonterminal() && !leftmost_nonterminal_) leftmost_nonterminal_ = i;
    if (n.symbol.arity > 0) stack.push_back({i, 0});
  }
  if (!stack.empty()) throw TreeError("incomplete prefix expression: missing operands");
}

std::vector<Symbol> SyntaxTree::expression_symbols() const {
  std::vector<Symbol> out;
  out.reserve(nodes_.size());
  for (std::size_t i = 1; i < nodes_.size(); ++i) out.push_back(nodes_[i].symbol);
  return out;
}

std::vector<std::string> SyntaxTree::to_prefix() const {
  std::vector<std::string> out;
  out.reserve(nodes_.size());
  for (std::size_t i = 1; i < nodes_.size(); ++i) out.push_back(nodes_[i].symbol.name);
  return out;
}

std::string SyntaxTree::prefix_string() const {
  std::string out;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (i > 1) out.push_back(' ');
    out += nodes_[i].symbol.name;
  }
  return out;
}

bool SyntaxTree::contains_operator(OpCode op) const noexcept {
  return std::any_of(nodes_.begin(), nodes_.end(), [op](const TreeNode& n) {
    return n.symbol.is_operator() && n.symbol.op == op;
  });
}

bool SyntaxTree::exceeds(const TreeLimits& limits) const noexcept {
  return node_count() > limits.max_nodes || depth_ > limits.max_depth ||
         n_constants() > limits.max_constants;
}

SyntaxTree SyntaxTree::replace_leaf(int node, std::span<const Symbol> replacement) const {
  if (node <= 0 || node >= node_count()) throw TreeError("replace_leaf: node index out of range");
  if (nodes_[static_cast<std::size_t>(node)].symbol.arity != 0) {
    throw TreeError("replace_leaf: target is not a leaf");
  }
  std::vector<Symbol> symbols;
  symbols.reserve(nodes_.size() + replacement.size());
  for (int i = 0; i < node; ++i) symbols.push_back(nodes_[static_cast<std::size_t>(i)].symbol);
  symbols.insert(symbols.end(), replacement.begin(), replacement.end());
  for (std::size_t i = static_cast<std::size_t>(node) + 1; i < nodes_.size(); ++i) {
    symbols.push_back(nodes_[i].symbol);
  }
  return SyntaxTree(std::move(symbols));
}

bool operator==(const SyntaxTree& a, const SyntaxTree& b) {
  if (a.nodes_.size() != b.nodes_.size()) return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    if (!(a.nodes_[i].symbol == b.nodes_[i].symbol) || a.nodes_[i].children != b.nodes_[i].children) {
      return false;
    }
  }
  return true;
}

std::string EvalFailure::describe() const {
  const char* what = "non-finite value";
  switch (cause) {
    case Cause::Domain: what = "domain error"; break;
    case Cause::DivisionByZero: what = "division by zero"; break;
    case Cause::NonFinite: what = "non-finite value"; break;
    case Cause::Overflow: what = "overflow"; break;
    case Cause::UnknownVariable: what = "unknown variable"; break;
    case Cause::Incomplete: what = "incomplete tree"; break;
    case Cause::ConstantCount: what = "constant count mismatch"; break;
  }
  std::ostringstream os;
  os << what << " at row " << row;
  return os.str();
}

namespace {

using Column = std::vector<double>;

struct Evaluator {
  const SyntaxTree& tree;
  const Eigen::MatrixXd& xs;
  std::span<const double> constants;
  std::optional<EvalFailure> failure;
  int rows;

  // Marks failure for the first row where `ok` is false; returns true if clean.
  template <typename Pred>
  bool check(const Column& col, EvalFailure::Cause cause, Pred ok) {
    for (int r = 0; r < rows; ++r) {
      if (!ok(col[static_cast<std::size_t>(r)])) {
        failure = EvalFailure{cause, r};
        return false;
      }
    }
    return true;
  }

  bool finite_guard(const Column& col) {
    for (int r = 0; r < rows; ++r) {
      double v = col[static_cast<std::size_t>(r)];
      if (!std::isfinite(v)) {
        failure = EvalFailure{EvalFailure::Cause::NonFinite, r};
        return false;
      }
      if (std::abs(v) > kOverflowGuard) {
        failure = EvalFailure{EvalFailure::Cause::Overflow, r};
        return false;
      }
    }
    return true;
  }

  static std::optional<long> integer_literal(const Symbol& s) {
    if (s.kind != SymbolKind::Literal) return std::nullopt;
    double v = s.value;
    if (std::floor(v) != v || std::abs(v) > 64) return std::nullopt;
    return static_cast<long>(v);
  }

  std::optional<Column> eval(int index) {
    const TreeNode& n = tree.node(index);
    const Symbol& s = n.symbol;
    const auto R = static_cast<std::size_t>(rows);
    switch (s.kind) {
      case SymbolKind::Root:
        return eval(n.children[0]);
      case SymbolKind::Nonterminal:
        failure = EvalFailure{EvalFailure::Cause::Incomplete, 0};
        return std::nullopt;
      case SymbolKind::Literal:
        return Column(R, s.value);
      case SymbolKind::ConstantSlot:
        return Column(R, constants[static_cast<std::size_t>(s.index)]);
      case SymbolKind::Variable: {
        if (s.index < 0 || s.index >= xs.cols()) {
          failure = EvalFailure{EvalFailure::Cause::UnknownVariable, 0};
          return std::nullopt;
        }
        Column col(R);
        for (std::size_t r = 0; r < R; ++r) col[r] = xs(static_cast<Eigen::Index>(r), s.index);
        return col;
      }
      case SymbolKind::Operator:
        break;
    }

    if (s.arity == 1) {
      auto arg = eval(n.children[0]);
      if (!arg) return std::nullopt;
      Column& a = *arg;
      switch (s.op) {
        case OpCode::Sin:
          for (auto& v : a) v = std::sin(v);
          break;
        case OpCode::Cos:
          for (auto& v : a) v = std::cos(v);
          break;
        case OpCode::Log:
          if (!check(a, EvalFailure::Cause::Domain, [](double v) { return v > 0.0; })) return std::nullopt;
          for (auto& v : a) v = std::log(v);
          break;
        default:
          break;
      }
      if (!finite_guard(a)) return std::nullopt;
      return arg;
    }

    if (s.op == OpCode::Pow) {
      // prefix `^ e b` denotes b^e
      const Symbol& exponent_symbol = tree.node(n.children[0]).symbol;
      auto exponent = eval(n.children[0]);
      if (!exponent) return std::nullopt;
      auto base = eval(n.children[1]);
      if (!base) return std::nullopt;
      Column& b = *base;
      const Column& e = *exponent;
      if (auto k = integer_literal(exponent_symbol)) {
        long p = *k;
        if (p < 0 && !check(b, EvalFailure::Cause::DivisionByZero, [](double v) { return v != 0.0; })) {
          return std::nullopt;
        }
        long m = p < 0 ? -p : p;
        for (auto& v : b) {
          double acc = 1.0;
          for (long j = 0; j < m; ++j) acc *= v;
          v = p < 0 ? 1.0 / acc : acc;
        }
      } else {
        if (!check(b, EvalFailure::Cause::Domain, [](double v) { return v > 0.0; })) return std::nullopt;
        for (std::size_t r = 0; r < R; ++r) b[r] = std::exp(e[r] * std::log(b[r]));
      }
      if (!finite_guard(b)) return std::nullopt;
      return base;
    }

    auto lhs = eval(n.children[0]);
    if (!lhs) return std::nullopt;
    auto rhs = eval(n.children[1]);
    if (!rhs) return std::nullopt;
    Column& a = *lhs;
    const Column& b = *rhs;
    switch (s.op) {
      case OpCode::Add:
        for (std::size_t r = 0; r < R; ++r) a[r] += b[r];
        break;
      case OpCode::Sub:
        for (std::size_t r = 0; r < R; ++r) a[r] -= b[r];
        break;
      case OpCode::Mul:
        for (std::size_t r = 0; r < R; ++r) a[r] *= b[r];
        break;
      case OpCode::Div:
        if (!check(b, EvalFailure::Cause::DivisionByZero, [](double v) { return v != 0.0; })) {
          return std::nullopt;
        }
        for (std::size_t r = 0; r < R; ++r) a[r] /= b[r];
        break;
      default:
        break;
    }
    if (!finite_guard(a)) return std::nullopt;
    return lhs;
  }
};

}  // namespace

EvalResult evaluate(const SyntaxTree& tree, const Eigen::MatrixXd& xs,
                    std::span<const double> constants) {
  if (!tree.done()) return EvalResult::fail({EvalFailure::Cause::Incomplete, 0});
  if (static_cast<int>(constants.size()) != tree.n_constants()) {
    return EvalResult::fail({EvalFailure::Cause::ConstantCount, 0});
  }
  Evaluator ev{tree, xs, constants, std::nullopt, static_cast<int>(xs.rows())};
  auto out = ev.eval(0);
  if (!out) return EvalResult::fail(*ev.failure);
  return EvalResult::success(std::move(*out));
}

std::string instantiate(const SyntaxTree& tree, std::span<const double> constants) {
  std::ostringstream os;
  os.precision(6);
  std::size_t next = 0;
  const auto& nodes = tree.nodes();
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (i > 1) os << ' ';
    if (nodes[i].symbol.kind == SymbolKind::ConstantSlot && next < constants.size()) {
      os << constants[next++];
    } else {
      os << nodes[i].symbol.name;
    }
  }
  return os.str();
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace gmct
