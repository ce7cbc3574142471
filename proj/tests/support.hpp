#pragma once

// Test-only helpers: seeded generators and independent numeric oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jetkcc/expr.hpp"
#include "jetkcc/dtransform.hpp"
#include "jetkcc/jetgeom.hpp"

namespace jetkcc::testing {

inline double rel_diff(double a, double b, double floor = 1e-12) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

/// Largest |x| over a tensor, used to floor relative comparisons of its
/// components: entries that vanish exactly compare against the tensor's scale.
inline double tensor_floor(std::span<const double> xs, double factor = 1e-6) {
  double r = 0;
  for (double x : xs) r = std::max(r, std::fabs(x));
  return std::max(r * factor, 1e-12);
}

/// Uniform doubles from a fixed-seed engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  bool coin() { return integer(0, 1) == 1; }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

inline std::vector<VariableId> all_variables(int m, int n) {
  std::vector<VariableId> vars;
  for (int a = 0; a < m; ++a) vars.push_back(VariableId::t(a));
  for (int i = 0; i < n; ++i) vars.push_back(VariableId::x(i));
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) vars.push_back(VariableId::v(i, a));
  return vars;
}

inline Bindings random_bindings(Rng& rng, int m, int n, double lo = -1.0, double hi = 1.0) {
  Bindings b(m, n);
  for (const auto& v : all_variables(m, n)) b.set(v, rng.uniform(lo, hi));
  return b;
}

/// Random expression whose every subexpression is defined for arguments in
/// roughly [-2, 2]: divisions and logs are guarded by strictly positive
/// denominators and arguments.
inline Expression random_expression(Rng& rng, const std::vector<VariableId>& vars, int depth) {
  if (depth <= 0 || rng.integer(0, 5) == 0) {
    if (rng.integer(0, 3) == 0) return Expression(std::round(rng.uniform(0, 3) * 4) / 4);  // parser never yields negative literals
    return Expression::variable(vars[static_cast<std::size_t>(rng.integer(0, static_cast<int>(vars.size()) - 1))]);
  }
  auto sub = [&] { return random_expression(rng, vars, depth - 1); };
  switch (rng.integer(0, 11)) {
    case 0:
    case 1:
      return Expression::raw_binary(Op::add, sub(), sub());
    case 2:
      return Expression::raw_binary(Op::sub, sub(), sub());
    case 3:
    case 4:
      return Expression::raw_binary(Op::mul, sub(), sub());
    case 5: {
      // a / (2 + cos(b))
      auto den = Expression::raw_binary(Op::add, Expression(2.0), Expression::raw_unary(Op::cos, sub()));
      return Expression::raw_binary(Op::div, sub(), den);
    }
    case 6:
      return Expression::raw_unary(Op::sin, sub());
    case 7:
      return Expression::raw_unary(Op::cos, sub());
    case 8:
      return Expression::raw_unary(Op::neg, sub());
    case 9:
      return Expression::raw_binary(Op::pow, sub(), Expression(static_cast<double>(rng.integer(0, 3))));
    case 10: {
      // log(1 + a^2)
      auto a = sub();
      return Expression::raw_unary(
          Op::log, Expression::raw_binary(Op::add, Expression(1.0), Expression::raw_binary(Op::mul, a, a)));
    }
    default:
      return Expression::raw_unary(Op::exp, Expression::raw_unary(Op::sin, sub()));
  }
}

inline Expression random_expression(Rng& rng, int m, int n, int depth) {
  return random_expression(rng, all_variables(m, n), depth);
}

/// t and x variables only.
inline std::vector<VariableId> base_variables(int m, int n) {
  std::vector<VariableId> vars;
  for (int a = 0; a < m; ++a) vars.push_back(VariableId::t(a));
  for (int i = 0; i < n; ++i) vars.push_back(VariableId::x(i));
  return vars;
}

/// Random symmetric system whose components are polynomials of degree at
/// most `degree` in the velocities with random (t, x) coefficients.
inline PdeSystem random_system(Rng& rng, int m, int n, int degree, int terms = 3) {
  const auto base = base_variables(m, n);
  PdeSystem F(m, n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) {
        Expression acc;
        for (int k = 0; k < terms; ++k) {
          Expression term = random_expression(rng, base, 2);
          const int d = rng.integer(0, degree);
          for (int e = 0; e < d; ++e) term = term * Expression::variable(VariableId::v(rng.integer(0, n - 1), rng.integer(0, m - 1)));
          acc = acc + term;
        }
        F.set(i, a, b, acc);
      }
  return F;
}

/// Explicit symmetric system from component strings keyed by (i, a, b), a <= b.
struct Entry {
  int i;
  int a;
  int b;
  const char* text;
};
inline PdeSystem system_of(int m, int n, std::initializer_list<Entry> entries) {
  PdeSystem F(m, n);
  for (const auto& e : entries) F.set(e.i, e.a, e.b, parse(e.text, m, n));
  return F;
}

namespace detail {

inline Expression asinh_of(const Expression& y) { return log(y + sqrt(y * y + Expression(1.0))); }

/// Triangular map y_k = s_k f_k(q_k) + c_k g_k(q_0..q_{k-1}) + b_k with f_k in
/// {identity, sinh} and its closed-form inverse.
inline void triangular_maps(Rng& rng, int dim, bool temporal, std::vector<Expression>& fwd, std::vector<Expression>& inv) {
  auto var = [&](int k) { return Expression::variable(temporal ? VariableId::t(k) : VariableId::x(k)); };
  fwd.clear();
  inv.clear();
  for (int k = 0; k < dim; ++k) {
    const double s = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.6, 1.5);
    const double b = rng.uniform(-0.5, 0.5);
    const double c = k > 0 ? rng.uniform(-0.6, 0.6) : 0.0;
    const int prev = k > 0 ? rng.integer(0, k - 1) : 0;
    const bool use_sin = rng.coin();
    auto coupling = [&](const Expression& q) { return use_sin ? sin(q) : q * q; };
    const bool use_sinh = rng.coin();
    Expression gf = k > 0 ? Expression(c) * coupling(var(prev)) : Expression(0.0);
    fwd.push_back(Expression(s) * (use_sinh ? sinh(var(k)) : var(k)) + gf + Expression(b));
    Expression gi = k > 0 ? Expression(c) * coupling(inv[static_cast<std::size_t>(prev)]) : Expression(0.0);
    const Expression core = (var(k) - gi - Expression(b)) / Expression(s);
    inv.push_back(use_sinh ? asinh_of(core) : core);
  }
}

}  // namespace detail

/// Random nonlinear triangular diffeomorphism of both charts with exact
/// inverses.
inline CoordinateChange random_triangular_change(Rng& rng, int m, int n) {
  std::vector<Expression> tf, ti, xf, xi;
  detail::triangular_maps(rng, m, true, tf, ti);
  detail::triangular_maps(rng, n, false, xf, xi);
  return CoordinateChange(m, n, tf, xf, ti, xi);
}

inline SectionMap section(std::vector<std::string> xs, int m) {
  std::vector<Expression> e;
  for (const auto& s : xs) e.push_back(parse(s, m, static_cast<int>(xs.size())));
  return SectionMap(std::move(e));
}

// F = F0(t, x, v) - F0(t, sigma, d sigma) - d2 sigma has sigma as an exact solution.
inline PdeSystem with_solution(const PdeSystem& F0, const SectionMap& sigma) {
  const Prolongation pr(sigma, F0.m());
  PdeSystem F(F0.m(), F0.n());
  for (int i = 0; i < F0.n(); ++i)
    for (int a = 0; a < F0.m(); ++a)
      for (int b = a; b < F0.m(); ++b) {
        const Expression dd = differentiate(differentiate(sigma[i], VariableId::t(a)), VariableId::t(b));
        F.set(i, a, b, F0(i, a, b) - pr.compose(F0(i, a, b)) - dd);
      }
  return F;
}

/// Central finite difference of `e` in `var` at `b`.
inline double central_difference(const Expression& e, const Bindings& b, VariableId var, double step = 1e-5) {
  Bindings plus = b;
  Bindings minus = b;
  plus.set(var, b.get(var) + step);
  minus.set(var, b.get(var) - step);
  return (evaluate(e, plus) - evaluate(e, minus)) / (2 * step);
}

}  // namespace jetkcc::testing
