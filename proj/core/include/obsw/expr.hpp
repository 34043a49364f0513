#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "obsw/errors.hpp"

namespace obsw {

// Coefficient expression language: literals, variables t/x/y/z, operators
// + - * / ^ (all binary operators left-associative, precedence ^ > unary
// minus > */ > +-), functions exp log sqrt abs min max neg. No loops, no
// assignment; trees are immutable after parse and safe to evaluate from any
// thread.

enum class ExprOp : std::uint8_t {
  literal,
  var_t,
  var_x,
  var_y,
  var_z,
  add,
  sub,
  mul,
  div,
  pow,
  neg,
  fn_exp,
  fn_log,
  fn_sqrt,
  fn_abs,
  fn_min,
  fn_max,
};

struct ExprNode {
  ExprOp op;
  double value;    // literal payload
  std::int32_t a;  // child tape indices, -1 when absent
  std::int32_t b;
};

// Variable-usage bitmask.
enum : std::uint8_t { kVarT = 1, kVarX = 2, kVarY = 4, kVarZ = 8 };

class ParseError : public Error {
public:
  ParseError(std::size_t offset, const std::string& expected, const std::string& found);
  std::size_t offset() const noexcept { return offset_; }
  const std::string& expected() const noexcept { return expected_; }

private:
  std::size_t offset_;
  std::string expected_;
};

class EvalError : public Error {
public:
  EvalError(const std::string& what_failed, const std::string& subexpr);
  const std::string& subexpression() const noexcept { return subexpr_; }

private:
  std::string subexpr_;
};

class Expr {
public:
  Expr();  // constant zero

  static Expr parse(std::string_view source);
  static Expr constant(double v);
  static Expr variable(char name);  // 't' 'x' 'y' 'z'

  // IEEE double arithmetic. Division by zero and log/sqrt domain violations
  // throw EvalError; NaN from other operations propagates to the caller.
  double eval(double t, double x, double y, double z) const;
  double eval_tx(double t, double x) const { return eval(t, x, 0.0, 0.0); }

  std::string str() const;  // minimal-parenthesis form; reparses identically

  std::uint8_t vars_used() const noexcept { return vars_; }
  bool is_literal() const noexcept;
  double literal_value() const;  // requires is_literal()

  bool structurally_equal(const Expr& other) const noexcept;

  const std::vector<ExprNode>& nodes() const noexcept { return tape_; }

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);

private:
  // Postorder tape; the root is the last node.
  std::vector<ExprNode> tape_;
  std::uint8_t vars_ = 0;

  void recompute_vars();
  std::string print_node(std::int32_t idx, int parent_prec, bool right_operand) const;
};

// Human-readable names for a variable mask, e.g. "t,x".
std::string var_mask_names(std::uint8_t mask);

}  // namespace obsw
