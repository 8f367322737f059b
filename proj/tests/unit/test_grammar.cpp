#include <doctest.h>

#include <map>
#include <random>

#include "gmct/datagen.hpp"
#include "gmct/grammar.hpp"
#include "support.hpp"

using namespace gmct;

namespace {

int rules_with_lhs(const Grammar& g, const std::string& lhs) {
  return static_cast<int>(g.rules_for(g.nonterminal_index(lhs)).size());
}

SearchState state_of(const std::string& prefix) { return SearchState{SyntaxTree::from_prefix(prefix), {}}; }

std::vector<int> legal_ids(const ActionMask& mask) {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace

TEST_SUITE("grammar") {

TEST_CASE("rule counts of the shipped grammars") {
  const Grammar& a = test::grammar("A");
  CHECK(a.num_rules() == 28);
  CHECK(rules_with_lhs(a, "S") == 21);
  CHECK(rules_with_lhs(a, "Power") == 5);
  CHECK(rules_with_lhs(a, "Variable") == 2);

  const Grammar& b = test::grammar("B");
  CHECK(b.num_rules() == 23);
  CHECK(rules_with_lhs(b, "S") == 15);
  CHECK(rules_with_lhs(b, "Inner") == 3);
  CHECK(rules_with_lhs(b, "I") == 5);

  const Grammar& c = test::grammar("C");
  CHECK(c.num_rules() == 19);
  CHECK(rules_with_lhs(c, "S") == 13);
  CHECK(rules_with_lhs(c, "I") == 6);
}

TEST_CASE("rule ids equal positions and weights sum to one per lhs") {
  for (const char* name : {"A", "B", "C", "tiny", "toy"}) {
    const Grammar& g = test::grammar(name);
    std::map<int, double> sums;
    for (int i = 0; i < g.num_rules(); ++i) {
      CHECK(g.rule(i).id == i);
      CHECK_FALSE(g.rule(i).rhs.empty());
      sums[g.rule(i).lhs] += g.rule(i).weight;
    }
    for (auto [lhs, sum] : sums) CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("parse errors") {
  SUBCASE("weights not summing to one") {
    CHECK_THROWS_AS(Grammar::parse("0.5 S -> x0\n0.4 S -> x1\n"), GrammarError);
  }
  SUBCASE("syntax error reports the line") {
    try {
      Grammar::parse("1 S -> T\n1 T x0\n");
      FAIL("expected a GrammarError");
    } catch (const GrammarError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("nonterminal without rules") { CHECK_THROWS_AS(Grammar::parse("1 S -> + T x0\n"), GrammarError); }
  SUBCASE("unreachable nonterminal") {
    CHECK_THROWS_AS(Grammar::parse("1 S -> x0\n1 T -> x1\n"), GrammarError);
  }
  SUBCASE("rhs with a dangling operator") { CHECK_THROWS_AS(Grammar::parse("1 S -> + x0\n"), GrammarError); }
  SUBCASE("empty text") { CHECK_THROWS_AS(Grammar::parse("# nothing\n"), GrammarError); }
}

TEST_CASE("alternatives desugar to one rule each with the line weight") {
  const Grammar g = Grammar::parse("start: S\n1 S -> + T T\n0.25 T -> x0 | x1 | sin x0 | c\n");
  REQUIRE(g.num_rules() == 5);
  for (int i = 1; i < 5; ++i) CHECK(g.rule(i).weight == doctest::Approx(0.25));
  CHECK(g.rule_string(3) == "T -> sin x0");
}

TEST_CASE("start header overrides the first lhs") {
  const Grammar g = Grammar::parse("start: S\n1 T -> x0\n1 S -> + T T\n");
  CHECK(g.nonterminals()[static_cast<std::size_t>(g.start())] == "S");
  CHECK(g.initial_state().tree.prefix_string() == "S");
}

TEST_CASE("parsing is stable across calls") {
  const Grammar g1 = Grammar::load(test::grammar_path("A"));
  const Grammar g2 = Grammar::load(test::grammar_path("A"));
  REQUIRE(g1.num_rules() == g2.num_rules());
  for (int i = 0; i < g1.num_rules(); ++i) CHECK(g1.rule_string(i) == g2.rule_string(i));
}

TEST_CASE("legal actions") {
  const Grammar& a = test::grammar("A");
  SUBCASE("start state allows exactly the S rules") {
    const auto ids = legal_ids(legal_actions(a, a.initial_state()));
    const auto s_rules = a.rules_for(a.nonterminal_index("S"));
    CHECK(ids == std::vector<int>(s_rules.begin(), s_rules.end()));
  }
  SUBCASE("c + sin(Variable) allows only the two Variable rules") {
    CHECK(legal_ids(legal_actions(a, state_of("+ c sin Variable"))) == std::vector<int>{26, 27});
  }
  SUBCASE("complete state has no legal action") {
    const ActionMask mask = legal_actions(a, state_of("+ c x0"));
    CHECK(mask.size() == 28u);
    CHECK(count_legal(mask) == 0);
  }
  SUBCASE("rules that would exceed the node bound are masked") {
    const Grammar& c = test::grammar("C");
    // 24 nodes with one open S: binary S rules (+2 nodes) exceed 25, leaves do not
    std::string prefix;
    for (int i = 0; i < 10; ++i) prefix += "+ x0 ";
    prefix += "+ x0 S";
    const SearchState st = state_of(prefix);
    REQUIRE(st.tree.node_count() == 24);
    const ActionMask mask = legal_actions(c, st);
    for (int id : c.rules_for(c.nonterminal_index("S"))) {
      CHECK(mask[static_cast<std::size_t>(id)] == (st.tree.node_count() + c.rule(id).growth() <= 25));
    }
  }
}

TEST_CASE("apply_rule rewrites the leftmost nonterminal") {
  const Grammar& a = test::grammar("A");
  const SearchState start = a.initial_state();
  const SearchState s1 = apply_rule(a, start, 0);
  CHECK(s1.tree.to_prefix() == std::vector<std::string>{"+", "c", "Variable"});
  CHECK(start.tree.prefix_string() == "S");
  const SearchState s2 = apply_rule(a, s1, 26);
  CHECK(s2.tree.prefix_string() == "+ c x0");
  CHECK(s2.done());

  const SearchState two = apply_rule(a, start, 1);  // + c ^ Power Variable
  const SearchState s3 = apply_rule(a, two, 22);    // Power -> 0.5
  CHECK(s3.tree.prefix_string() == "+ c ^ 0.5 Variable");
  CHECK_THROWS_AS(apply_rule(a, start, 26), IllegalAction);
  CHECK_THROWS_AS(apply_rule(a, s2, 26), IllegalAction);
}

TEST_CASE("sample_rule frequencies follow the weights") {
  const Grammar& a = test::grammar("A");
  std::mt19937_64 rng(42);
  constexpr int kDraws = 100000;
  std::map<int, int> counts;
  const int power = a.nonterminal_index("Power");
  for (int i = 0; i < kDraws; ++i) ++counts[a.sample_rule(power, rng)];
  CHECK(counts.size() == 5u);
  for (auto [id, n] : counts) CHECK(std::abs(n / double(kDraws) - 0.2) < 0.01);

  counts.clear();
  const int variable = a.nonterminal_index("Variable");
  for (int i = 0; i < kDraws; ++i) ++counts[a.sample_rule(variable, rng)];
  for (auto [id, n] : counts) CHECK(std::abs(n / double(kDraws) - 0.5) < 0.01);

  const Grammar single = Grammar::parse("1 S -> x0\n");
  for (int i = 0; i < 10; ++i) CHECK(single.sample_rule(0, rng) == 0);
}

TEST_CASE("random legal derivations end in well-formed expressions") {
  for (const char* name : {"A", "B", "C", "tiny", "toy"}) {
    const Grammar& g = test::grammar(name);
    std::mt19937_64 rng(7);
    int completed = 0;
    for (int trial = 0; trial < 2000; ++trial) {
      SearchState s = g.initial_state();
      while (!s.done()) {
        const auto ids = legal_ids(legal_actions(g, s));
        if (ids.empty()) break;
        std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
        s = apply_rule(g, s, ids[pick(rng)]);
      }
      if (!s.done()) continue;
      ++completed;
      const SyntaxTree back = SyntaxTree::from_prefix(s.tree.prefix_string());
      CHECK(back == s.tree);
      CHECK(s.tree.node_count() <= 25);
    }
    CHECK(completed > 0);
  }
}

}  // TEST_SUITE
