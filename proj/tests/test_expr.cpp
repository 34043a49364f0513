#include <doctest.h>

#include <cmath>

#include "obsw/expr.hpp"
#include "obsw/rng.hpp"

using namespace obsw;

TEST_CASE("literals and basic arithmetic") {
  CHECK(Expr::parse("0").eval(0, 0, 0, 0) == 0.0);
  CHECK(Expr::parse("x + 2*t").eval(1.0, 3.0, 0, 0) == doctest::Approx(5.0));
  CHECK(Expr::parse("max(x - 1, 0)").eval(0, 0.5, 0, 0) == 0.0);
  CHECK(Expr::parse("exp(0)").eval(0, 0, 0, 0) == 1.0);
  CHECK(Expr::parse("x^2").eval(0, -3.0, 0, 0) == doctest::Approx(9.0));
}

TEST_CASE("precedence and associativity") {
  CHECK(Expr::parse("2 + 3 * 4").eval(0, 0, 0, 0) == 14.0);
  CHECK(Expr::parse("2 * 3 ^ 2").eval(0, 0, 0, 0) == 18.0);
  CHECK(Expr::parse("-x^2").eval(0, 2.0, 0, 0) == -4.0);    // ^ binds tighter than unary -
  CHECK(Expr::parse("2^-1").eval(0, 0, 0, 0) == 0.5);
  CHECK(Expr::parse("8 - 3 - 2").eval(0, 0, 0, 0) == 3.0);  // left associative
  CHECK(Expr::parse("16 / 4 / 2").eval(0, 0, 0, 0) == 2.0);
  CHECK(Expr::parse("2^3^2").eval(0, 0, 0, 0) == 64.0);     // left associative ^
  CHECK(Expr::parse("min(1+1, max(0, 3))").eval(0, 0, 0, 0) == 2.0);
  CHECK(Expr::parse("neg(y)").eval(0, 0, 7.0, 0) == -7.0);
}

TEST_CASE("parse errors carry byte offsets and expectations") {
  CHECK_THROWS_AS(Expr::parse("x +"), ParseError);
  CHECK_THROWS_AS(Expr::parse("(x"), ParseError);
  CHECK_THROWS_AS(Expr::parse("min(x)"), ParseError);
  try {
    Expr::parse("x + q * 2");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 4);
    CHECK(std::string(e.what()).find("permitted") != std::string::npos);
  }
  // every identifier outside the permitted set fails
  for (const char* bad : {"a", "u", "foo", "sin(x)"}) CHECK_THROWS_AS(Expr::parse(bad), ParseError);
}

TEST_CASE("evaluation domain errors") {
  CHECK_THROWS_AS(Expr::parse("1/x").eval(0, 0.0, 0, 0), EvalError);
  CHECK_THROWS_AS(Expr::parse("log(x)").eval(0, 0.0, 0, 0), EvalError);
  CHECK_THROWS_AS(Expr::parse("sqrt(x - 2)").eval(0, 1.0, 0, 0), EvalError);
  try {
    Expr::parse("1 + 1/(x - 1)").eval(0, 1.0, 0, 0);
    FAIL("expected an eval error");
  } catch (const EvalError& e) {
    CHECK(e.subexpression().find("x - 1") != std::string::npos);
  }
  // NaN from pow propagates rather than throwing
  const double v = Expr::parse("x^0.5").eval(0, -1.0, 0, 0);
  CHECK(std::isnan(v));
}

TEST_CASE("referential transparency and variable masks") {
  const Expr e = Expr::parse("x*z + exp(t) - y");
  CHECK(e.eval(0.5, 2.0, 1.0, 3.0) == e.eval(0.5, 2.0, 1.0, 3.0));
  CHECK(e.vars_used() == (kVarT | kVarX | kVarY | kVarZ));
  CHECK(Expr::parse("x").vars_used() == kVarX);
  CHECK(Expr::parse("3.5").vars_used() == 0);
}

namespace {

// random expression source for the round-trip property
std::string random_source(std::uint64_t seed, std::uint64_t id, int depth) {
  const auto pick = [&](std::uint32_t slot, std::uint32_t n) {
    return rng::uniform_below(seed, id, slot + 1000 * static_cast<std::uint32_t>(depth),
                              rng::kScenario, n);
  };
  if (depth >= 4 || pick(0, 3) == 0) {
    switch (pick(1, 6)) {
      case 0: return std::string("t");
      case 1: return std::string("x");
      case 2: return std::string("y");
      case 3: return std::string("z");
      case 4: return std::to_string(pick(2, 100)) + "." + std::to_string(pick(3, 99));
      default: return std::to_string(pick(4, 50));
    }
  }
  const std::string a = random_source(seed, id * 7 + 1, depth + 1);
  const std::string b = random_source(seed, id * 7 + 2, depth + 1);
  switch (pick(5, 9)) {
    case 0: return "(" + a + ") + (" + b + ")";
    case 1: return "(" + a + ") - (" + b + ")";
    case 2: return "(" + a + ") * (" + b + ")";
    case 3: return "(" + a + ") / (" + b + " + 7)";
    case 4: return "min(" + a + ", " + b + ")";
    case 5: return "max(" + a + ", " + b + ")";
    case 6: return "abs(" + a + ")";
    case 7: return "exp(-abs(" + a + "))";
    default: return "-(" + a + ") ^ 2";
  }
}

}  // namespace

TEST_CASE("pretty-print round trip is structurally identical") {
  for (std::uint64_t i = 0; i < 200; ++i) {
    const std::string src = random_source(42, i, 0);
    const Expr a = Expr::parse(src);
    const Expr b = Expr::parse(a.str());
    CAPTURE(src);
    CAPTURE(a.str());
    CHECK(a.structurally_equal(b));
    CHECK(a.str() == b.str());
  }
}

TEST_CASE("combinators build the switching driver shape") {
  const Expr l = Expr::parse("x");
  const Expr b = Expr::parse("0.3");
  const Expr f = l + Expr::variable('z') * b;
  CHECK(f.eval(0, 2.0, 123.0, 1.0) == doctest::Approx(2.3));
  CHECK((f.vars_used() & kVarY) == 0);
  CHECK(Expr::constant(-2.5).eval(0, 0, 0, 0) == -2.5);
  CHECK(Expr::constant(-2.5).str() == "-2.5");
}
