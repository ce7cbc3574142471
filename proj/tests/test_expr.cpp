#include <gtest/gtest.h>

#include <cmath>

#include "jetkcc/expr.hpp"
#include "support.hpp"

namespace jetkcc {
namespace {

using testing::central_difference;
using testing::random_bindings;
using testing::random_expression;
using testing::rel_diff;
using testing::Rng;


TEST(Parse, FreeVariables) {
  const Expression e = parse("v1_2^2 + sin(t1)", 2, 1);
  EXPECT_EQ(e.dependencies(), VariableId::v(0, 1).bit() | VariableId::t(0).bit());
  EXPECT_EQ(e.op(), Op::add);
}

TEST(Parse, SyntaxErrorReportsOffset) {
  try {
    parse("x1*", 1, 1);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.reason(), ParseError::Reason::syntax);
    EXPECT_EQ(err.position(), 3u);
  }
}

TEST(Parse, IndexOutOfRange) {
  try {
    parse("t3", 2, 2);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.reason(), ParseError::Reason::index_out_of_range);
  }
  EXPECT_THROW(parse("v1_3", 2, 2), ParseError);
  EXPECT_THROW(parse("x0", 2, 2), ParseError);
}

TEST(Parse, UnknownIdentifier) {
  try {
    parse("1 + foo(x1)", 1, 1);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.reason(), ParseError::Reason::unknown_identifier);
    EXPECT_EQ(err.position(), 4u);
  }
  EXPECT_THROW(parse("v1", 1, 1), ParseError);
  EXPECT_THROW(parse("sin x1", 1, 1), ParseError);
}

TEST(Parse, PrecedenceAndAssociativity) {
  Bindings b(1, 1);
  b.set(VariableId::x(0), 2.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("-x1^2", 1, 1), b), -4.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("2^3^2", 1, 1), b), 512.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("8/2/2", 1, 1), b), 2.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("1 - 2 - 3", 1, 1), b), -4.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("x1^-1", 1, 1), b), 0.5);
  EXPECT_DOUBLE_EQ(evaluate(parse(" 1.5e1 + .5 ", 1, 1), b), 15.5);
  EXPECT_DOUBLE_EQ(evaluate(parse("2*pi - pi*2 + e - exp(1)", 1, 1), b), 0.0);
}

TEST(Parse, PrintParseRoundTrip) {
  Rng rng(11);
  for (int k = 0; k < 300; ++k) {
    const Expression e = random_expression(rng, 2, 2, 5);
    const std::string text = to_string(e);
    const Expression back = parse(text, 2, 2);
    ASSERT_TRUE(structurally_equal(e, back)) << text << " vs " << to_string(back);
  }
  for (const char* s : {"-(x1 + x2)", "x1 - (x2 - t1)", "(x1^2)^3", "-x1^2", "x1/(x2*t1)", "2^-x1"}) {
    const Expression e = parse(s, 2, 2);
    EXPECT_TRUE(structurally_equal(e, parse(to_string(e), 2, 2))) << s;
  }
}

TEST(Evaluate, Arithmetic) {
  Bindings b(1, 1);
  b.set(VariableId::t(0), 1.0).set(VariableId::v(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("2*t1 + v1_1", 1, 1), b), 5.0);
  EXPECT_DOUBLE_EQ(evaluate(parse("sin(0)", 1, 1), Bindings(1, 1)), 0.0);
}

TEST(Evaluate, DomainErrors) {
  Bindings b(1, 1);
  b.set(VariableId::x(0), 0.0);
  try {
    evaluate(parse("1/x1", 1, 1), b);
    FAIL();
  } catch (const EvaluationError& err) {
    EXPECT_NE(std::string(err.what()).find("division by zero in 1/x1"), std::string::npos);
  }
  EXPECT_THROW(evaluate(parse("log(x1)", 1, 1), b), EvaluationError);
  EXPECT_THROW(evaluate(parse("sqrt(x1 - 1)", 1, 1), b), EvaluationError);
  EXPECT_THROW(evaluate(parse("(x1 - 1)^0.5", 1, 1), b), EvaluationError);
  EXPECT_DOUBLE_EQ(evaluate(parse("(x1 - 2)^3", 1, 1), b), -8.0);
}

TEST(Evaluate, UnboundVariable) {
  Bindings b(2, 1);
  b.set(VariableId::t(0), 1.0);
  EXPECT_THROW(evaluate(parse("t1 + t2", 2, 1), b), EvaluationError);
}

TEST(Differentiate, PowerRule) {
  const auto v11 = VariableId::v(0, 0);
  const Expression d = differentiate(parse("v1_1^2", 1, 1), v11);
  EXPECT_EQ(to_string(d), "2*v1_1");
}

TEST(Differentiate, IndependentCoordinates) {
  const Expression d = differentiate(parse("x1", 1, 1), VariableId::t(0));
  EXPECT_TRUE(d.is_zero());
}

TEST(Differentiate, MatchesCentralDifference) {
  const Expression e = parse("sin(x1)*v1_2", 2, 1);
  Bindings b(2, 1);
  b.set(VariableId::x(0), 0.7).set(VariableId::v(0, 1), 2.0);
  const double exact = evaluate(differentiate(e, VariableId::x(0)), b);
  EXPECT_LE(rel_diff(exact, central_difference(e, b, VariableId::x(0))), 1e-7);
  EXPECT_DOUBLE_EQ(exact, 2.0 * std::cos(0.7));
}

TEST(Differentiate, RandomExpressionsAgainstFiniteDifferences) {
  Rng rng(2024);
  const auto vars = testing::all_variables(2, 2);
  for (int k = 0; k < 100; ++k) {
    const Expression e = random_expression(rng, 2, 2, 4);
    const Bindings b = random_bindings(rng, 2, 2);
    const VariableId v = vars[static_cast<std::size_t>(rng.integer(0, static_cast<int>(vars.size()) - 1))];
    const double exact = evaluate(differentiate(e, v), b);
    const double fd = central_difference(e, b, v);
    EXPECT_LE(std::fabs(exact - fd), 1e-5 * std::max(1.0, std::fabs(exact))) << to_string(e);
  }
}

TEST(Differentiate, Linearity) {
  Rng rng(7);
  const auto vars = testing::all_variables(2, 2);
  for (int k = 0; k < 50; ++k) {
    const Expression e1 = random_expression(rng, 2, 2, 3);
    const Expression e2 = random_expression(rng, 2, 2, 3);
    const double a = rng.uniform(-2, 2);
    const VariableId v = vars[static_cast<std::size_t>(rng.integer(0, 11))];
    const Expression lhs = differentiate(Expression(a) * e1 + e2, v);
    const Expression rhs = Expression(a) * differentiate(e1, v) + differentiate(e2, v);
    const Bindings b = random_bindings(rng, 2, 2);
    EXPECT_LE(std::fabs(evaluate(lhs, b) - evaluate(rhs, b)),
              1e-12 * std::max(1.0, std::fabs(evaluate(rhs, b))));
  }
}

TEST(Differentiate, MixedPartialsCommute) {
  Rng rng(8);
  const auto vars = testing::all_variables(2, 2);
  for (int k = 0; k < 50; ++k) {
    const Expression e = random_expression(rng, 2, 2, 4);
    const VariableId u = vars[static_cast<std::size_t>(rng.integer(0, 11))];
    const VariableId w = vars[static_cast<std::size_t>(rng.integer(0, 11))];
    const Bindings b = random_bindings(rng, 2, 2);
    const double uw = evaluate(differentiate(differentiate(e, u), w), b);
    const double wu = evaluate(differentiate(differentiate(e, w), u), b);
    EXPECT_LE(std::fabs(uw - wu), 1e-12 * std::max(1.0, std::fabs(uw))) << to_string(e);
  }
}

TEST(Differentiate, UnusedVariableIsZero) {
  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    const Expression e = random_expression(rng, 1, 1, 4);  // only t1, x1, v1_1
    const Expression d = differentiate(e, VariableId::x(3));
    EXPECT_TRUE(d.is_zero());
  }
}

TEST(Simplify, Identities) {
  EXPECT_EQ(to_string(simplify(parse("0*sin(t1) + x1", 1, 1))), "x1");
  EXPECT_EQ(to_string(simplify(parse("2*3", 1, 1))), "6");
  EXPECT_EQ(to_string(simplify(parse("--x1", 1, 1))), "x1");
  EXPECT_EQ(to_string(simplify(parse("x1^1 + 0^2 + 1*t1*1", 1, 1))), "x1 + t1");
  EXPECT_EQ(to_string(simplify(parse("(x1 - 0)/1", 1, 1))), "x1");
}

TEST(Simplify, PreservesValues) {
  Rng rng(99);
  for (int k = 0; k < 100; ++k) {
    const Expression e = random_expression(rng, 2, 2, 5);
    const Expression s = simplify(e);
    const Bindings b = random_bindings(rng, 2, 2);
    EXPECT_LE(rel_diff(evaluate(e, b), evaluate(s, b)), 1e-12) << to_string(e);
  }
}

TEST(Substitute, SimultaneousReplacement) {
  const Expression e = parse("x1*t1 + x2", 1, 2);
  const Expression a = parse("x2", 1, 2);
  const Expression c = parse("x1 + 1", 1, 2);
  Substitution sub{};
  sub[static_cast<std::size_t>(VariableId::x(0).slot())] = &a;
  sub[static_cast<std::size_t>(VariableId::x(1).slot())] = &c;
  EXPECT_EQ(to_string(substitute(e, sub)), "x2*t1 + (x1 + 1)");
}

TEST(Tape, SharesCommonSubexpressions) {
  const Expression a = parse("sin(x1)*cos(x1)", 1, 1);
  const Expression b = parse("sin(x1)*cos(x1) + 1", 1, 1);  // built independently
  const Expression roots[] = {a, b};
  const Tape tape(roots);
  EXPECT_EQ(tape.num_instructions(), 6u);  // x1 sin cos mul 1 add
  Bindings bind(1, 1);
  bind.set(VariableId::x(0), 0.3);
  const auto out = tape.evaluate(bind);
  EXPECT_DOUBLE_EQ(out[1] - out[0], 1.0);
}

}  // namespace
}  // namespace jetkcc
