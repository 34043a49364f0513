#include "obsw/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace obsw {

namespace {

constexpr int kMaxDepth = 64;

bool is_binary(ExprOp op) {
  switch (op) {
    case ExprOp::add:
    case ExprOp::sub:
    case ExprOp::mul:
    case ExprOp::div:
    case ExprOp::pow:
    case ExprOp::fn_min:
    case ExprOp::fn_max:
      return true;
    default:
      return false;
  }
}

bool is_unary(ExprOp op) {
  switch (op) {
    case ExprOp::neg:
    case ExprOp::fn_exp:
    case ExprOp::fn_log:
    case ExprOp::fn_sqrt:
    case ExprOp::fn_abs:
      return true;
    default:
      return false;
  }
}

int precedence(ExprOp op) {
  switch (op) {
    case ExprOp::add:
    case ExprOp::sub:
      return 1;
    case ExprOp::mul:
    case ExprOp::div:
      return 2;
    case ExprOp::neg:
      return 3;
    case ExprOp::pow:
      return 4;
    default:
      return 5;  // atoms and function calls never need parentheses
  }
}

const char* op_token(ExprOp op) {
  switch (op) {
    case ExprOp::add: return "+";
    case ExprOp::sub: return "-";
    case ExprOp::mul: return "*";
    case ExprOp::div: return "/";
    case ExprOp::pow: return "^";
    default: return "?";
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Token {
  enum Kind { number, ident, op, lparen, rparen, comma, end } kind;
  std::size_t offset;
  double value = 0.0;
  char symbol = 0;
  std::string text;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_ws();
    Token tok;
    tok.offset = pos_;
    if (pos_ >= src_.size()) {
      tok.kind = Token::end;
      return tok;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return lex_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return lex_ident();
    switch (c) {
      case '+': case '-': case '*': case '/': case '^':
        ++pos_;
        tok.kind = Token::op;
        tok.symbol = c;
        return tok;
      case '(':
        ++pos_;
        tok.kind = Token::lparen;
        return tok;
      case ')':
        ++pos_;
        tok.kind = Token::rparen;
        return tok;
      case ',':
        ++pos_;
        tok.kind = Token::comma;
        return tok;
      default:
        throw ParseError(pos_, "number, identifier, operator, '(' or ')'",
                         std::string(1, c));
    }
  }

private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  Token lex_number() {
    Token tok;
    tok.offset = pos_;
    tok.kind = Token::number;
    const char* begin = src_.data() + pos_;
    const char* end = src_.data() + src_.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc()) throw ParseError(pos_, "numeric literal", std::string(1, *begin));
    tok.value = value;
    pos_ += static_cast<std::size_t>(ptr - begin);
    return tok;
  }

  Token lex_ident() {
    Token tok;
    tok.offset = pos_;
    tok.kind = Token::ident;
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    tok.text = std::string(src_.substr(start, pos_ - start));
    return tok;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

class Parser {
public:
  explicit Parser(std::string_view src) : lexer_(src) { advance(); }

  std::vector<ExprNode> run() {
    const std::int32_t root = parse_expr(0, 0);
    (void)root;
    if (cur_.kind != Token::end)
      throw ParseError(cur_.offset, "end of input", describe(cur_));
    return std::move(tape_);
  }

private:
  void advance() { cur_ = lexer_.next(); }

  static std::string describe(const Token& t) {
    switch (t.kind) {
      case Token::number: return "number";
      case Token::ident: return "'" + t.text + "'";
      case Token::op: return std::string("'") + t.symbol + "'";
      case Token::lparen: return "'('";
      case Token::rparen: return "')'";
      case Token::comma: return "','";
      case Token::end: return "end of input";
    }
    return "?";
  }

  std::int32_t emit(ExprOp op, double value = 0.0, std::int32_t a = -1, std::int32_t b = -1) {
    tape_.push_back({op, value, a, b});
    return static_cast<std::int32_t>(tape_.size() - 1);
  }

  std::int32_t parse_expr(int min_prec, int depth) {
    if (depth > kMaxDepth)
      throw ParseError(cur_.offset, "expression of depth <= 64", "deeper nesting");
    std::int32_t lhs = parse_unary(depth);
    while (cur_.kind == Token::op) {
      const ExprOp op = binary_op(cur_.symbol);
      const int prec = precedence(op);
      if (prec < min_prec) break;
      advance();
      // left-associative: the right operand binds strictly tighter
      const std::int32_t rhs = parse_expr(prec + 1, depth + 1);
      lhs = emit(op, 0.0, lhs, rhs);
    }
    return lhs;
  }

  static ExprOp binary_op(char c) {
    switch (c) {
      case '+': return ExprOp::add;
      case '-': return ExprOp::sub;
      case '*': return ExprOp::mul;
      case '/': return ExprOp::div;
      case '^': return ExprOp::pow;
    }
    return ExprOp::add;  // unreachable
  }

  std::int32_t parse_unary(int depth) {
    if (cur_.kind == Token::op && cur_.symbol == '-') {
      const std::size_t at = cur_.offset;
      (void)at;
      advance();
      // unary minus binds between '*' and '^'
      const std::int32_t operand = parse_expr(precedence(ExprOp::pow), depth + 1);
      return emit(ExprOp::neg, 0.0, operand);
    }
    if (cur_.kind == Token::op && cur_.symbol == '+') {  // unary plus: no-op
      advance();
      return parse_unary(depth);
    }
    return parse_primary(depth);
  }

  std::int32_t parse_primary(int depth) {
    switch (cur_.kind) {
      case Token::number: {
        const double v = cur_.value;
        advance();
        return emit(ExprOp::literal, v);
      }
      case Token::lparen: {
        advance();
        const std::int32_t inner = parse_expr(0, depth + 1);
        expect_rparen();
        return inner;
      }
      case Token::ident:
        return parse_ident(depth);
      default:
        throw ParseError(cur_.offset, "number, variable, function or '('", describe(cur_));
    }
  }

  void expect_rparen() {
    if (cur_.kind != Token::rparen) throw ParseError(cur_.offset, "')'", describe(cur_));
    advance();
  }

  void expect_comma() {
    if (cur_.kind != Token::comma) throw ParseError(cur_.offset, "','", describe(cur_));
    advance();
  }

  std::int32_t parse_ident(int depth) {
    const std::string name = cur_.text;
    const std::size_t at = cur_.offset;
    advance();
    if (name.size() == 1 && (name == "t" || name == "x" || name == "y" || name == "z")) {
      switch (name[0]) {
        case 't': return emit(ExprOp::var_t);
        case 'x': return emit(ExprOp::var_x);
        case 'y': return emit(ExprOp::var_y);
        default: return emit(ExprOp::var_z);
      }
    }
    struct Fn { const char* name; ExprOp op; int arity; };
    static constexpr std::array<Fn, 7> fns = {{{"exp", ExprOp::fn_exp, 1},
                                               {"log", ExprOp::fn_log, 1},
                                               {"sqrt", ExprOp::fn_sqrt, 1},
                                               {"abs", ExprOp::fn_abs, 1},
                                               {"neg", ExprOp::neg, 1},
                                               {"min", ExprOp::fn_min, 2},
                                               {"max", ExprOp::fn_max, 2}}};
    for (const Fn& fn : fns) {
      if (name == fn.name) {
        if (cur_.kind != Token::lparen) throw ParseError(cur_.offset, "'('", describe(cur_));
        advance();
        const std::int32_t a = parse_expr(0, depth + 1);
        std::int32_t b = -1;
        if (fn.arity == 2) {
          expect_comma();
          b = parse_expr(0, depth + 1);
        }
        expect_rparen();
        return emit(fn.op, 0.0, a, b);
      }
    }
    throw ParseError(at,
                     "one of the permitted identifiers t, x, y, z, exp, log, sqrt, abs, "
                     "min, max, neg",
                     "'" + name + "'");
  }

  Lexer lexer_;
  Token cur_;
  std::vector<ExprNode> tape_;
};

}  // namespace

ParseError::ParseError(std::size_t offset, const std::string& expected, const std::string& found)
    : Error(errc::specification, "parse error at byte " + std::to_string(offset) + ": expected " +
                                     expected + ", found " + found),
      offset_(offset),
      expected_(expected) {}

EvalError::EvalError(const std::string& what_failed, const std::string& subexpr)
    : Error(errc::evaluation, what_failed + " in subexpression '" + subexpr + "'"),
      subexpr_(subexpr) {}

Expr::Expr() : tape_{{ExprOp::literal, 0.0, -1, -1}} {}

Expr Expr::parse(std::string_view source) {
  Expr e;
  e.tape_ = Parser(source).run();
  e.recompute_vars();
  return e;
}

Expr Expr::constant(double v) {
  Expr e;
  if (v < 0.0 || std::signbit(v)) {
    e.tape_ = {{ExprOp::literal, -v, -1, -1}, {ExprOp::neg, 0.0, 0, -1}};
  } else {
    e.tape_ = {{ExprOp::literal, v, -1, -1}};
  }
  return e;
}

Expr Expr::variable(char name) {
  Expr e;
  switch (name) {
    case 't': e.tape_ = {{ExprOp::var_t, 0.0, -1, -1}}; break;
    case 'x': e.tape_ = {{ExprOp::var_x, 0.0, -1, -1}}; break;
    case 'y': e.tape_ = {{ExprOp::var_y, 0.0, -1, -1}}; break;
    case 'z': e.tape_ = {{ExprOp::var_z, 0.0, -1, -1}}; break;
    default: raise(errc::parameter, std::string("unknown variable '") + name + "'");
  }
  e.recompute_vars();
  return e;
}

void Expr::recompute_vars() {
  vars_ = 0;
  int sp = 0, need = 0;
  for (const ExprNode& n : tape_) {
    switch (n.op) {
      case ExprOp::var_t: vars_ |= kVarT; ++sp; break;
      case ExprOp::var_x: vars_ |= kVarX; ++sp; break;
      case ExprOp::var_y: vars_ |= kVarY; ++sp; break;
      case ExprOp::var_z: vars_ |= kVarZ; ++sp; break;
      case ExprOp::literal: ++sp; break;
      default: sp -= is_binary(n.op) ? 1 : 0; break;
    }
    need = std::max(need, sp);
  }
  if (need > 2 * kMaxDepth - 1)
    raise(errc::structural, "expression too deep to evaluate");
}

bool Expr::is_literal() const noexcept {
  return tape_.size() == 1 && tape_[0].op == ExprOp::literal;
}

double Expr::literal_value() const {
  if (!is_literal()) raise(errc::structural, "expression is not a single literal");
  return tape_[0].value;
}

double Expr::eval(double t, double x, double y, double z) const {
  // The tape is in postorder, so a value stack evaluates it directly.
  // recompute_vars() bounds the needed stack at construction time.
  double stack[2 * kMaxDepth];
  int sp = 0;
  for (std::size_t i = 0; i < tape_.size(); ++i) {
    const ExprNode& n = tape_[i];
    switch (n.op) {
      case ExprOp::literal: stack[sp++] = n.value; break;
      case ExprOp::var_t: stack[sp++] = t; break;
      case ExprOp::var_x: stack[sp++] = x; break;
      case ExprOp::var_y: stack[sp++] = y; break;
      case ExprOp::var_z: stack[sp++] = z; break;
      case ExprOp::add: --sp; stack[sp - 1] += stack[sp]; break;
      case ExprOp::sub: --sp; stack[sp - 1] -= stack[sp]; break;
      case ExprOp::mul: --sp; stack[sp - 1] *= stack[sp]; break;
      case ExprOp::div:
        --sp;
        if (stack[sp] == 0.0)
          throw EvalError("division by zero", print_node(static_cast<std::int32_t>(i), 0, false));
        stack[sp - 1] /= stack[sp];
        break;
      case ExprOp::pow: --sp; stack[sp - 1] = std::pow(stack[sp - 1], stack[sp]); break;
      case ExprOp::neg: stack[sp - 1] = -stack[sp - 1]; break;
      case ExprOp::fn_exp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
      case ExprOp::fn_log:
        if (stack[sp - 1] <= 0.0)
          throw EvalError("log of non-positive argument",
                          print_node(static_cast<std::int32_t>(i), 0, false));
        stack[sp - 1] = std::log(stack[sp - 1]);
        break;
      case ExprOp::fn_sqrt:
        if (stack[sp - 1] < 0.0)
          throw EvalError("sqrt of negative argument",
                          print_node(static_cast<std::int32_t>(i), 0, false));
        stack[sp - 1] = std::sqrt(stack[sp - 1]);
        break;
      case ExprOp::fn_abs: stack[sp - 1] = std::fabs(stack[sp - 1]); break;
      case ExprOp::fn_min: --sp; stack[sp - 1] = std::fmin(stack[sp - 1], stack[sp]); break;
      case ExprOp::fn_max: --sp; stack[sp - 1] = std::fmax(stack[sp - 1], stack[sp]); break;
    }
  }
  return stack[0];
}

std::string Expr::print_node(std::int32_t idx, int parent_prec, bool right_operand) const {
  const ExprNode& n = tape_[static_cast<std::size_t>(idx)];
  switch (n.op) {
    case ExprOp::literal: return format_double(n.value);
    case ExprOp::var_t: return "t";
    case ExprOp::var_x: return "x";
    case ExprOp::var_y: return "y";
    case ExprOp::var_z: return "z";
    case ExprOp::fn_exp: return "exp(" + print_node(n.a, 0, false) + ")";
    case ExprOp::fn_log: return "log(" + print_node(n.a, 0, false) + ")";
    case ExprOp::fn_sqrt: return "sqrt(" + print_node(n.a, 0, false) + ")";
    case ExprOp::fn_abs: return "abs(" + print_node(n.a, 0, false) + ")";
    case ExprOp::fn_min:
      return "min(" + print_node(n.a, 0, false) + ", " + print_node(n.b, 0, false) + ")";
    case ExprOp::fn_max:
      return "max(" + print_node(n.a, 0, false) + ", " + print_node(n.b, 0, false) + ")";
    case ExprOp::neg: {
      const int prec = precedence(ExprOp::neg);
      std::string s = "-" + print_node(n.a, prec, true);
      if (prec < parent_prec) return "(" + s + ")";
      return s;
    }
    default: {
      const int prec = precedence(n.op);
      std::string s = print_node(n.a, prec, false);
      s += " ";
      s += op_token(n.op);
      s += " ";
      s += print_node(n.b, prec + 1, true);  // left-assoc: parenthesize equal-prec right child
      const bool need = prec < parent_prec || (prec == parent_prec && right_operand);
      if (need) return "(" + s + ")";
      return s;
    }
  }
}

std::string Expr::str() const {
  return print_node(static_cast<std::int32_t>(tape_.size() - 1), 0, false);
}

bool Expr::structurally_equal(const Expr& other) const noexcept {
  if (tape_.size() != other.tape_.size()) return false;
  for (std::size_t i = 0; i < tape_.size(); ++i) {
    const ExprNode& a = tape_[i];
    const ExprNode& b = other.tape_[i];
    if (a.op != b.op || a.a != b.a || a.b != b.b) return false;
    if (a.op == ExprOp::literal && a.value != b.value) return false;
  }
  return true;
}

namespace {
void append_shifted(std::vector<ExprNode>& tape, const std::vector<ExprNode>& src) {
  const std::int32_t shift = static_cast<std::int32_t>(tape.size());
  for (const ExprNode& n : src) {
    ExprNode m = n;
    if (m.a >= 0) m.a += shift;
    if (m.b >= 0) m.b += shift;
    tape.push_back(m);
  }
}
}  // namespace

Expr operator+(const Expr& a, const Expr& b) {
  Expr e = a;
  const std::int32_t lhs_root = static_cast<std::int32_t>(e.tape_.size() - 1);
  append_shifted(e.tape_, b.tape_);
  e.tape_.push_back({ExprOp::add, 0.0, lhs_root, static_cast<std::int32_t>(e.tape_.size() - 1)});
  e.recompute_vars();
  return e;
}

Expr operator*(const Expr& a, const Expr& b) {
  Expr e = a;
  const std::int32_t lhs_root = static_cast<std::int32_t>(e.tape_.size() - 1);
  append_shifted(e.tape_, b.tape_);
  e.tape_.push_back({ExprOp::mul, 0.0, lhs_root, static_cast<std::int32_t>(e.tape_.size() - 1)});
  e.recompute_vars();
  return e;
}

std::string var_mask_names(std::uint8_t mask) {
  std::string out;
  const auto add = [&](char c) {
    if (!out.empty()) out += ",";
    out += c;
  };
  if (mask & kVarT) add('t');
  if (mask & kVarX) add('x');
  if (mask & kVarY) add('y');
  if (mask & kVarZ) add('z');
  return out;
}

}  // namespace obsw
