#include "gmct/datagen.hpp"

#include <algorithm>
#include <cstdio>

namespace gmct {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x6d63u};
  return std::mt19937_64(seq);
}

SyntaxTree sample_tree(const Grammar& grammar, const GenConstraints& constraints, std::mt19937_64& rng) {
  const auto& lim = constraints.limits;
  for (int attempt = 0; attempt < constraints.max_retries; ++attempt) {
    SyntaxTree tree = SyntaxTree::initial(grammar.start_symbol());
    bool ok = true;
    while (auto target = tree.leftmost_nonterminal()) {
      int nt = tree.node(*target).symbol.index;
      int id = grammar.sample_rule(nt, rng);
      tree = tree.replace_leaf(*target, grammar.rule(id).rhs);
      if (tree.node_count() >= lim.max_nodes || tree.depth() > lim.max_depth ||
          tree.n_constants() > lim.max_constants) {
        ok = false;
        break;
      }
    }
    if (ok) return tree;
  }
  throw GenerationError("sample_tree: retry budget of " + std::to_string(constraints.max_retries) +
                        " exhausted");
}

std::set<int> variables_under_log(const SyntaxTree& tree) {
  std::set<int> out;
  const auto& nodes = tree.nodes();
  std::vector<std::pair<int, bool>> stack{{0, false}};
  while (!stack.empty()) {
    auto [i, under_log] = stack.back();
    stack.pop_back();
    const auto& n = nodes[static_cast<std::size_t>(i)];
    bool flag = under_log || (n.symbol.is_operator() && n.symbol.op == OpCode::Log);
    if (n.symbol.kind == SymbolKind::Variable && flag) out.insert(n.symbol.index);
    for (int c : n.children) {
      if (c >= 0) stack.emplace_back(c, flag);
    }
  }
  return out;
}

Problem sample_dataset(const SyntaxTree& tree, int n_vars, const GenConstraints& constraints,
                       std::mt19937_64& rng, std::string id) {
  if (!tree.done()) throw GenerationError("sample_dataset: tree is incomplete");
  if (constraints.n_rows < 2) throw GenerationError("sample_dataset: need at least two rows");
  n_vars = std::max(n_vars, 1);
  const auto log_vars = variables_under_log(tree);
  std::uniform_real_distribution<double> bound(constraints.x_min, constraints.x_max);
  std::uniform_real_distribution<double> constant(constraints.const_min, constraints.const_max);

  for (int attempt = 0; attempt < constraints.max_retries; ++attempt) {
    Eigen::MatrixXd xs(constraints.n_rows, n_vars);
    for (int v = 0; v < n_vars; ++v) {
      double lo = 0.0, hi = 0.0;
      for (int tries = 0;; ++tries) {
        if (tries > 10000) throw GenerationError("sample_dataset: cannot draw a wide enough x range");
        lo = bound(rng);
        hi = bound(rng);
        if (lo > hi) std::swap(lo, hi);
        if (log_vars.contains(v)) lo = 0.0;
        if (hi - lo >= constraints.min_range_width) break;
      }
      std::uniform_real_distribution<double> draw(lo, hi);
      for (int r = 0; r < constraints.n_rows; ++r) xs(r, v) = draw(rng);
    }
    std::vector<double> constants(static_cast<std::size_t>(tree.n_constants()));
    for (auto& c : constants) c = constant(rng);

    EvalResult eval = evaluate(tree, xs, constants);
    if (!eval) continue;
    TabularDataset ds{std::move(id), std::move(xs), eval.values(), tree.prefix_string()};
    return Problem{tree, std::move(constants), std::move(ds)};
  }
  throw GenerationError("sample_dataset: retry budget of " + std::to_string(constraints.max_retries) +
                        " exhausted for '" + tree.prefix_string() + "'");
}

std::vector<Problem> generate_problems(const Grammar& grammar, int n, const GenConstraints& constraints,
                                       std::uint64_t seed, const std::string& id_prefix) {
  std::vector<Problem> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) {
    auto rng = stream_rng(seed, static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof id, "%05d", i);
    // a tree whose datasets keep failing is abandoned for a fresh tree
    for (int attempt = 0;; ++attempt) {
      SyntaxTree tree = sample_tree(grammar, constraints, rng);
      try {
        out.push_back(sample_dataset(tree, grammar.num_variables(), constraints, rng, id_prefix + id));
        break;
      } catch (const GenerationError&) {
        if (attempt + 1 >= constraints.max_retries) throw;
      }
    }
  }
  return out;
}

}  // namespace gmct
