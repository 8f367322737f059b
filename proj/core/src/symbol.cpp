#include "gmct/symbol.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <utility>

namespace gmct {

namespace {

constexpr std::array<std::pair<std::string_view, OpCode>, 8> kOperators{{
    {"+", OpCode::Add},
    {"-", OpCode::Sub},
    {"*", OpCode::Mul},
    {"/", OpCode::Div},
    {"^", OpCode::Pow},
    {"sin", OpCode::Sin},
    {"cos", OpCode::Cos},
    {"log", OpCode::Log},
}};

std::optional<double> parse_number(std::string_view token) {
  if (token.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
  return value;
}

}  // namespace

std::optional<OpCode> lookup_operator(std::string_view name) noexcept {
  for (const auto& [spelling, op] : kOperators) {
    if (spelling == name) return op;
  }
  // common aliases
  if (name == "·" || name == "×") return OpCode::Mul;
  if (name == "ln") return OpCode::Log;
  return std::nullopt;
}

int operator_arity(OpCode op) noexcept {
  switch (op) {
    case OpCode::Sin:
    case OpCode::Cos:
    case OpCode::Log:
      return 1;
    default:
      return 2;
  }
}

std::string_view operator_name(OpCode op) noexcept {
  for (const auto& [spelling, code] : kOperators) {
    if (code == op) return spelling;
  }
  return "?";
}

Symbol make_operator(OpCode op) {
  Symbol s;
  s.kind = SymbolKind::Operator;
  s.op = op;
  s.arity = operator_arity(op);
  s.name = std::string(operator_name(op));
  return s;
}

Symbol make_variable(int index) {
  Symbol s;
  s.kind = SymbolKind::Variable;
  s.index = index;
  s.name = "x" + std::to_string(index);
  return s;
}

Symbol make_constant_slot() {
  Symbol s;
  s.kind = SymbolKind::ConstantSlot;
  s.name = "c";
  return s;
}

Symbol make_literal(double value, std::string_view spelling) {
  Symbol s;
  s.kind = SymbolKind::Literal;
  s.value = value;
  s.name = std::string(spelling);
  return s;
}

Symbol make_nonterminal(std::string_view name, int index) {
  Symbol s;
  s.kind = SymbolKind::Nonterminal;
  s.name = std::string(name);
  s.index = index;
  return s;
}

Symbol make_root() {
  Symbol s;
  s.kind = SymbolKind::Root;
  s.name = "y";
  s.arity = 1;
  return s;
}

bool is_identifier(std::string_view token) noexcept {
  if (token.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(token.front())) || token.front() == '_')) return false;
  for (char ch : token) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')) return false;
  }
  return true;
}

Symbol classify_token(std::string_view token) {
  if (auto op = lookup_operator(token)) return make_operator(*op);
  if (token == "c") return make_constant_slot();
  if (token.size() >= 2 && token.front() == 'x') {
    int index = 0;
    auto [ptr, ec] = std::from_chars(token.data() + 1, token.data() + token.size(), index);
    if (ec == std::errc{} && ptr == token.data() + token.size() && index >= 0) {
      return make_variable(index);
    }
  }
  if (auto value = parse_number(token)) return make_literal(*value, token);
  return make_nonterminal(token);
}

}  // namespace gmct
