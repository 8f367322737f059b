#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace gmct {

enum class SymbolKind {
  Root,
  Nonterminal,
  Operator,
  Variable,
  ConstantSlot,
  Literal,
};

enum class OpCode { Add, Sub, Mul, Div, Pow, Sin, Cos, Log };

// A grammar or tree symbol. Operators carry their fixed arity; every other
// symbol is a leaf. `index` is the variable index for Variable symbols and the
// grammar nonterminal index for Nonterminal symbols (-1 when unresolved).
struct Symbol {
  SymbolKind kind = SymbolKind::Literal;
  std::string name;
  int arity = 0;
  OpCode op = OpCode::Add;
  double value = 0.0;
  int index = -1;

  bool is_nonterminal() const noexcept { return kind == SymbolKind::Nonterminal; }
  bool is_operator() const noexcept { return kind == SymbolKind::Operator; }

  friend bool operator==(const Symbol& a, const Symbol& b) noexcept {
    return a.kind == b.kind && a.name == b.name;
  }
};

std::optional<OpCode> lookup_operator(std::string_view name) noexcept;
int operator_arity(OpCode op) noexcept;
std::string_view operator_name(OpCode op) noexcept;

Symbol make_operator(OpCode op);
Symbol make_variable(int index);
Symbol make_constant_slot();
Symbol make_literal(double value, std::string_view spelling);
Symbol make_nonterminal(std::string_view name, int index = -1);
Symbol make_root();

// Classifies a bare token: operator names, `x<k>`, `c`, numeric literals.
// Anything else is returned as an unresolved nonterminal.
Symbol classify_token(std::string_view token);

bool is_identifier(std::string_view token) noexcept;

}  // namespace gmct
