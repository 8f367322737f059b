#include "gmct/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace gmct {

GrammarError::GrammarError(const std::string& what, int line, int column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

namespace {

struct Token {
  std::string text;
  int column;  // 1-based
};

std::vector<Token> tokenize_line(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back({std::string(line.substr(i, j - i)), static_cast<int>(i) + 1});
    i = j;
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<double> parse_weight(std::string_view token) {
  if (token.size() >= 2 && token.front() == '[' && token.back() == ']') {
    token = token.substr(1, token.size() - 2);
  }
  Symbol s = classify_token(token);
  if (s.kind != SymbolKind::Literal) return std::nullopt;
  return s.value;
}

bool is_arrow(std::string_view t) { return t == "->" || t == "→"; }

struct PendingRule {
  std::string lhs;
  int lhs_column;
  std::vector<Token> rhs;
  double weight;
  int line;
};

// True iff `rhs` is exactly one complete prefix expression.
bool single_prefix_tree(const std::vector<Symbol>& rhs) {
  int open = 1;
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    if (open == 0) return false;
    open += rhs[i].arity - 1;
  }
  return open == 0;
}

}  // namespace

Grammar Grammar::parse(std::string_view text) {
  std::vector<PendingRule> pending;
  std::optional<std::string> start_name;
  int start_line = 0;
  bool normalize = false;

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.rfind("start:", 0) == 0) {
      start_name = trim(std::string_view(line).substr(6));
      start_line = line_no;
      if (start_name->empty()) throw GrammarError("empty start symbol", line_no, 1);
      continue;
    }
    if (line.rfind("normalize:", 0) == 0) {
      std::string value = trim(std::string_view(line).substr(10));
      if (value == "true") {
        normalize = true;
      } else if (value == "false") {
        normalize = false;
      } else {
        throw GrammarError("normalize expects true or false", line_no, 11);
      }
      continue;
    }

    auto tokens = tokenize_line(raw);
    if (tokens.size() < 4) {
      throw GrammarError("expected `weight lhs -> rhs...`", line_no, tokens.empty() ? 1 : tokens.front().column);
    }
    auto weight = parse_weight(tokens[0].text);
    if (!weight) throw GrammarError("expected a numeric weight, got '" + tokens[0].text + "'", line_no, tokens[0].column);
    if (!(*weight > 0.0 && *weight <= 1.0)) {
      throw GrammarError("weight must lie in (0, 1]", line_no, tokens[0].column);
    }
    if (!is_identifier(tokens[1].text) || classify_token(tokens[1].text).kind != SymbolKind::Nonterminal) {
      throw GrammarError("invalid nonterminal '" + tokens[1].text + "'", line_no, tokens[1].column);
    }
    if (!is_arrow(tokens[2].text)) throw GrammarError("expected '->'", line_no, tokens[2].column);

    std::vector<Token> alternative;
    auto flush = [&](int column) {
      if (alternative.empty()) throw GrammarError("empty right-hand side", line_no, column);
      pending.push_back({tokens[1].text, tokens[1].column, alternative, *weight, line_no});
      alternative.clear();
    };
    for (std::size_t i = 3; i < tokens.size(); ++i) {
      if (tokens[i].text == "|") {
        flush(tokens[i].column);
      } else {
        alternative.push_back(tokens[i]);
      }
    }
    flush(tokens.back().column + 1);
  }

  if (pending.empty()) throw GrammarError("grammar has no production rules", line_no, 1);

  Grammar g;
  std::map<std::string, int, std::less<>> nt_index;
  for (const auto& p : pending) {
    if (!nt_index.contains(p.lhs)) {
      nt_index.emplace(p.lhs, static_cast<int>(g.nonterminals_.size()));
      g.nonterminals_.push_back(p.lhs);
    }
  }
  g.rule_index_.resize(g.nonterminals_.size());
  g.vocabulary_ = g.nonterminals_;
  std::set<std::string, std::less<>> seen_terminals;

  for (const auto& p : pending) {
    ProductionRule rule;
    rule.id = static_cast<int>(g.rules_.size());
    rule.lhs = nt_index.at(p.lhs);
    rule.weight = p.weight;
    rule.line = p.line;
    for (const auto& tok : p.rhs) {
      Symbol s = classify_token(tok.text);
      if (s.kind == SymbolKind::Nonterminal) {
        auto it = nt_index.find(tok.text);
        if (!is_identifier(tok.text) || it == nt_index.end()) {
          throw GrammarError("unknown symbol '" + tok.text + "'", p.line, tok.column);
        }
        s.index = it->second;
      } else {
        if (s.kind == SymbolKind::Variable) g.num_variables_ = std::max(g.num_variables_, s.index + 1);
        if (!seen_terminals.contains(s.name)) {
          seen_terminals.insert(s.name);
          g.vocabulary_.push_back(s.name);
        }
      }
      rule.rhs.push_back(std::move(s));
    }
    if (!single_prefix_tree(rule.rhs)) {
      throw GrammarError("right-hand side is not a single well-formed prefix expression", p.line,
                         p.rhs.front().column);
    }
    g.rule_index_[static_cast<std::size_t>(rule.lhs)].push_back(rule.id);
    g.rules_.push_back(std::move(rule));
  }

  if (start_name) {
    auto it = nt_index.find(*start_name);
    if (it == nt_index.end()) throw GrammarError("unknown start symbol '" + *start_name + "'", start_line, 8);
    g.start_ = it->second;
  }

  for (std::size_t nt = 0; nt < g.nonterminals_.size(); ++nt) {
    double sum = 0.0;
    for (int id : g.rule_index_[nt]) sum += g.rules_[static_cast<std::size_t>(id)].weight;
    if (normalize) {
      for (int id : g.rule_index_[nt]) g.rules_[static_cast<std::size_t>(id)].weight /= sum;
    } else if (std::abs(sum - 1.0) > 1e-9) {
      const auto& first = g.rules_[static_cast<std::size_t>(g.rule_index_[nt].front())];
      std::ostringstream msg;
      msg << "weights of '" << g.nonterminals_[nt] << "' sum to " << sum << ", expected 1";
      throw GrammarError(msg.str(), first.line, 1);
    }
  }

  // reachability from the start symbol
  std::vector<bool> reached(g.nonterminals_.size(), false);
  std::vector<int> frontier{g.start_};
  reached[static_cast<std::size_t>(g.start_)] = true;
  while (!frontier.empty()) {
    int nt = frontier.back();
    frontier.pop_back();
    for (int id : g.rule_index_[static_cast<std::size_t>(nt)]) {
      for (const auto& s : g.rules_[static_cast<std::size_t>(id)].rhs) {
        if (s.is_nonterminal() && !reached[static_cast<std::size_t>(s.index)]) {
          reached[static_cast<std::size_t>(s.index)] = true;
          frontier.push_back(s.index);
        }
      }
    }
  }
  for (std::size_t nt = 0; nt < reached.size(); ++nt) {
    if (!reached[nt]) {
      const auto& first = g.rules_[static_cast<std::size_t>(g.rule_index_[nt].front())];
      throw GrammarError("unreachable nonterminal '" + g.nonterminals_[nt] + "'", first.line, 1);
    }
  }
  return g;
}

Grammar Grammar::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grammar file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

int Grammar::nonterminal_index(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < nonterminals_.size(); ++i) {
    if (nonterminals_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int Grammar::vocabulary_index(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (vocabulary_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

SearchState Grammar::initial_state(std::string dataset_id) const {
  return SearchState{SyntaxTree::initial(start_symbol()), std::move(dataset_id)};
}

std::string Grammar::rule_string(int id) const {
  const auto& r = rule(id);
  std::string out = nonterminals_[static_cast<std::size_t>(r.lhs)] + " ->";
  for (const auto& s : r.rhs) out += " " + s.name;
  return out;
}

int Grammar::sample_rule(int nonterminal, std::mt19937_64& rng) const {
  auto ids = rules_for(nonterminal);
  double total = 0.0;
  for (int id : ids) total += rules_[static_cast<std::size_t>(id)].weight;
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (int id : ids) {
    u -= rules_[static_cast<std::size_t>(id)].weight;
    if (u < 0.0) return id;
  }
  return ids.back();
}

namespace {

int target_nonterminal(const Grammar& grammar, const SyntaxTree& tree, int node) {
  const Symbol& s = tree.node(node).symbol;
  return s.index >= 0 ? s.index : grammar.nonterminal_index(s.name);
}

}  // namespace

ActionMask legal_actions(const Grammar& grammar, const SearchState& state, const TreeLimits& limits) {
  ActionMask mask(static_cast<std::size_t>(grammar.num_rules()), false);
  auto target = state.tree.leftmost_nonterminal();
  if (!target) return mask;
  int nt = target_nonterminal(grammar, state.tree, *target);
  if (nt < 0) return mask;
  const int nodes = state.tree.node_count();
  for (int id : grammar.rules_for(nt)) {
    if (nodes + grammar.rule(id).growth() <= limits.max_nodes) mask[static_cast<std::size_t>(id)] = true;
  }
  return mask;
}

int count_legal(const ActionMask& mask) noexcept {
  return static_cast<int>(std::count(mask.begin(), mask.end(), true));
}

SearchState apply_rule(const Grammar& grammar, const SearchState& state, int rule_id,
                       const TreeLimits& limits) {
  if (rule_id < 0 || rule_id >= grammar.num_rules()) {
    throw IllegalAction("rule id " + std::to_string(rule_id) + " out of range");
  }
  auto target = state.tree.leftmost_nonterminal();
  if (!target) throw IllegalAction("state is complete; no nonterminal to expand");
  const auto& rule = grammar.rule(rule_id);
  if (rule.lhs != target_nonterminal(grammar, state.tree, *target)) {
    throw IllegalAction("rule " + std::to_string(rule_id) + " does not rewrite '" +
                        state.tree.node(*target).symbol.name + "'");
  }
  if (state.tree.node_count() + rule.growth() > limits.max_nodes) {
    throw IllegalAction("rule " + std::to_string(rule_id) + " exceeds the node limit");
  }
  return SearchState{state.tree.replace_leaf(*target, rule.rhs), state.dataset_id};
}

}  // namespace gmct
