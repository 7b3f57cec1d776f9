#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "utk/error.hpp"
#include "utk/scalar.hpp"

namespace utk::expr {

/// Parsed expression over numbers, quoted text, identifiers and the
/// operators ! - * / + - < <= > >= == != && || ?: and parentheses.
///
/// Precedence, high to low: unary; * /; + -; < <= > >=; == !=; &&; ||; and
/// the right-associative ternary. Text literals are single-quoted ('brick');
/// the opening quote may also be a backtick (`brick').
class Expression {
public:
  enum class Op : std::uint8_t {
    literal, identifier, negate, logical_not,
    mul, div, add, sub, lt, le, gt, ge, eq, ne, logical_and, logical_or, ternary,
  };

  struct Node {
    Op op = Op::literal;
    Scalar value;                     // literal
    std::uint32_t slot = 0;           // identifier
    std::uint32_t child[3] = {0, 0, 0};
    std::size_t offset = 0;
  };

  /// Throws ExprSyntaxError carrying the character offset.
  static Expression parse(std::string_view text);

  const std::string& text() const { return text_; }
  /// Distinct identifiers in first-use order; eval() binds values by slot.
  const std::vector<std::string>& identifiers() const { return identifiers_; }

  /// Evaluates with values[i] bound to identifiers()[i]. Any null operand
  /// yields null; comparisons yield 1/0; division by zero yields null and
  /// logs a warning. Throws Error(TypeError) on mixed-type comparisons or
  /// arithmetic on text.
  Scalar eval(std::span<const Scalar> values, WarningLog* log = nullptr) const;

  /// Convenience binding by name. Throws Error(UnboundIdentifier).
  Scalar eval(const std::map<std::string, Scalar>& bindings, WarningLog* log = nullptr) const;

private:
  friend class Parser;
  Scalar eval_node(std::uint32_t id, std::span<const Scalar> values, WarningLog* log) const;

  std::string text_;
  std::vector<Node> nodes_;
  std::uint32_t root_ = 0;
  std::vector<std::string> identifiers_;
};

}  // namespace utk::expr
