#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "gmct/expression.hpp"
#include "gmct/grammar.hpp"
#include "support.hpp"

using namespace gmct;

namespace {

int arity_of(const std::string& tok) {
  if (tok == "+" || tok == "-" || tok == "*" || tok == "/" || tok == "^") return 2;
  if (tok == "sin" || tok == "cos" || tok == "log") return 1;
  return 0;
}

// Independent counter over the token list: y root + tokens, and the deepest
// edge distance from y.
TreeMetrics brute_metrics(const std::vector<std::string>& tokens) {
  TreeMetrics m;
  m.node_count = static_cast<int>(tokens.size()) + 1;
  std::vector<std::pair<int, int>> open;  // (depth, children still needed)
  int depth = 1;
  for (const auto& t : tokens) {
    if (!open.empty()) {
      depth = open.back().first + 1;
      if (--open.back().second == 0) open.pop_back();
    } else {
      depth = 1;
    }
    m.depth = std::max(m.depth, depth);
    if (t == "c") ++m.n_constants;
    if (int a = arity_of(t); a > 0) open.emplace_back(depth, a);
  }
  return m;
}

std::string random_expression(std::mt19937_64& rng, int budget) {
  static const std::vector<std::string> leaves{"x0", "x1", "c", "2", "0.5", "S"};
  static const std::vector<std::string> ops{"+", "-", "*", "/", "^", "sin", "cos", "log"};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (budget <= 1 || u(rng) < 0.35) return leaves[rng() % leaves.size()];
  const std::string& op = ops[rng() % ops.size()];
  if (arity_of(op) == 1) return op + " " + random_expression(rng, budget - 1);
  return op + " " + random_expression(rng, budget / 2) + " " + random_expression(rng, budget / 2);
}

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_SUITE("expression") {

TEST_CASE("prefix serialisation") {
  CHECK(SyntaxTree::from_prefix("+ c sin x0").to_prefix() == std::vector<std::string>{"+", "c", "sin", "x0"});
  CHECK(SyntaxTree::initial(make_nonterminal("S")).to_prefix() == std::vector<std::string>{"S"});
  CHECK(SyntaxTree::from_prefix("^ 0.5 x0").prefix_string() == "^ 0.5 x0");
  CHECK_THROWS_AS(SyntaxTree::from_prefix("+ x0"), TreeError);
  CHECK_THROWS_AS(SyntaxTree::from_prefix("x0 x1"), TreeError);
  CHECK_THROWS_AS(SyntaxTree::from_prefix(""), TreeError);
}

TEST_CASE("metrics match the brute-force counter") {
  CHECK(SyntaxTree::initial(make_nonterminal("S")).metrics() == TreeMetrics{2, 1, 0});
  CHECK(SyntaxTree::from_prefix("+ c x0").metrics() == TreeMetrics{4, 2, 1});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const SyntaxTree t = SyntaxTree::from_prefix(random_expression(rng, 12));
    CHECK(t.metrics() == brute_metrics(t.to_prefix()));
  }
}

TEST_CASE("round trip through prefix tokens") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10000; ++i) {
    const SyntaxTree t = SyntaxTree::from_prefix(random_expression(rng, 16));
    CHECK(SyntaxTree::from_prefix(t.prefix_string()) == t);
  }
}

TEST_CASE("constant slots in prefix order and leftmost nonterminal") {
  const SyntaxTree t = SyntaxTree::from_prefix("+ * c x0 + S c");
  REQUIRE(t.n_constants() == 2);
  CHECK(t.node(t.constant_slots()[0]).symbol.name == "c");
  CHECK(t.constant_slots()[0] < t.constant_slots()[1]);
  REQUIRE(t.leftmost_nonterminal());
  CHECK(t.node(*t.leftmost_nonterminal()).symbol.name == "S");
  CHECK_FALSE(t.done());
}

TEST_CASE("evaluation") {
  SUBCASE("sum") {
    const EvalResult r = evaluate(SyntaxTree::from_prefix("+ x0 x1"), rows({{1, 2}, {3, 4}}), {});
    REQUIRE(r.ok());
    CHECK(r.values() == std::vector<double>{3, 7});
  }
  SUBCASE("constant times square") {
    const std::vector<double> c{2.0};
    const EvalResult r = evaluate(SyntaxTree::from_prefix("* c ^ 2 x0"), rows({{3}}), c);
    REQUIRE(r.ok());
    CHECK(r.values()[0] == 18.0);
  }
  SUBCASE("power takes the exponent first") {
    const EvalResult r = evaluate(SyntaxTree::from_prefix("^ 0.5 x0"), rows({{4}}), {});
    REQUIRE(r.ok());
    CHECK(r.values()[0] == doctest::Approx(2.0));
  }
  SUBCASE("integer exponents work for negative bases") {
    const EvalResult r = evaluate(SyntaxTree::from_prefix("^ 3 x0"), rows({{-2}}), {});
    REQUIRE(r.ok());
    CHECK(r.values()[0] == -8.0);
  }
  SUBCASE("log domain") {
    const EvalResult r = evaluate(SyntaxTree::from_prefix("log x0"), rows({{1}, {-1}}), {});
    REQUIRE_FALSE(r.ok());
    CHECK(r.failure().cause == EvalFailure::Cause::Domain);
    CHECK(r.failure().row == 1);
    CHECK(r.values().empty());
  }
  SUBCASE("division by zero") {
    const EvalResult r = evaluate(SyntaxTree::from_prefix("/ 1 x0"), rows({{0}}), {});
    REQUIRE_FALSE(r.ok());
    CHECK(r.failure().cause == EvalFailure::Cause::DivisionByZero);
  }
  SUBCASE("zero to a negative power") {
    const EvalResult r = evaluate(SyntaxTree::from_prefix("^ x1 x0"), rows({{0, -1}}), {});
    CHECK_FALSE(r.ok());
  }
  SUBCASE("fractional power of a negative base") {
    CHECK_FALSE(evaluate(SyntaxTree::from_prefix("^ 0.5 x0"), rows({{-4}}), {}).ok());
  }
  SUBCASE("overflow guard") {
    CHECK_FALSE(evaluate(SyntaxTree::from_prefix("^ x0 x1"), rows({{400, 10}}), {}).ok());
  }
  SUBCASE("incomplete tree and wrong constant count") {
    CHECK_FALSE(evaluate(SyntaxTree::from_prefix("+ x0 S"), rows({{1}}), {}).ok());
    CHECK_FALSE(evaluate(SyntaxTree::from_prefix("+ x0 c"), rows({{1}}), {}).ok());
  }
}

TEST_CASE("evaluation is deterministic") {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd xs = Eigen::MatrixXd::Random(50, 2);
  const std::vector<double> c{1.3, -0.7, 2.1, 0.4, 0.9};
  for (int i = 0; i < 500; ++i) {
    std::string text = random_expression(rng, 10);
    if (text.find('S') != std::string::npos) continue;
    const SyntaxTree t = SyntaxTree::from_prefix(text);
    if (t.n_constants() > 5) continue;
    const std::span<const double> cs(c.data(), static_cast<std::size_t>(t.n_constants()));
    const EvalResult a = evaluate(t, xs, cs);
    const EvalResult b = evaluate(t, xs, cs);
    REQUIRE(a.ok() == b.ok());
    if (a.ok()) {
      CHECK(a.values().size() == 50u);
      CHECK(std::memcmp(a.values().data(), b.values().data(), 50 * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("instantiate substitutes constants") {
  const std::vector<double> c{2.5};
  CHECK(instantiate(SyntaxTree::from_prefix("+ c x0"), c) == "+ 2.5 x0");
}

}  // TEST_SUITE
