#pragma once

// Scalar expressions over the jet coordinates (t^a, x^i, x^i_a).
//
// Expressions are immutable DAGs of shared nodes. The arithmetic operators
// and the math functions below build nodes through simplifying constructors
// (constant folding and 0/1 identities); the parser builds raw nodes so that
// printing and re-parsing is the identity.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "jetkcc/errors.hpp"

namespace jetkcc {

/// Largest supported temporal or spatial dimension.
inline constexpr int kMaxDim = 4;
/// Number of distinct jet variables: m + n + n*m at the dimension cap.
inline constexpr int kNumSlots = kMaxDim + kMaxDim + kMaxDim * kMaxDim;

/// Identifies one jet coordinate. Indices are zero-based; names are one-based
/// (`t1`, `x2`, `v1_2`).
class VariableId {
 public:
  enum class Kind : std::uint8_t { temporal, spatial, velocity };

  static VariableId t(int alpha);
  static VariableId x(int i);
  static VariableId v(int i, int alpha);
  static VariableId from_slot(int slot);

  Kind kind() const { return kind_; }
  /// Spatial index for `x` and `v`, -1 for `t`.
  int spatial() const { return spatial_; }
  /// Temporal index for `t` and `v`, -1 for `x`.
  int temporal() const { return temporal_; }

  /// Dense index in [0, kNumSlots), used for dependency masks and bindings.
  int slot() const;
  std::uint32_t bit() const { return std::uint32_t{1} << slot(); }
  std::string name() const;

  friend bool operator==(const VariableId&, const VariableId&) = default;

 private:
  VariableId(Kind kind, int spatial, int temporal)
      : kind_(kind), spatial_(spatial), temporal_(temporal) {}

  Kind kind_;
  int spatial_;
  int temporal_;
};

/// Dependency masks for whole variable families.
std::uint32_t temporal_mask();
std::uint32_t spatial_mask();
std::uint32_t velocity_mask();

enum class Op : std::uint8_t {
  literal,
  constant,  // pi or e, kept symbolic for printing
  variable,
  neg,
  sin,
  cos,
  tan,
  exp,
  log,
  sqrt,
  sinh,
  cosh,
  add,
  sub,
  mul,
  div,
  pow,
};

bool is_unary(Op op);
bool is_binary(Op op);

struct Node;

class Expression {
 public:
  /// The literal 0.
  Expression();
  /// A numeric literal.
  Expression(double value);  // NOLINT(google-explicit-constructor)

  static Expression variable(VariableId var);
  static Expression pi();
  static Expression euler();

  /// Raw node construction, no simplification. Used by the parser.
  static Expression raw_unary(Op op, Expression arg);
  static Expression raw_binary(Op op, Expression lhs, Expression rhs);

  Op op() const;
  /// Literal or named-constant value.
  double value() const;
  /// Variable of an `Op::variable` node.
  VariableId var() const;
  const Expression& arg() const { return lhs(); }
  const Expression& lhs() const;
  const Expression& rhs() const;

  /// Bit mask of jet variables this expression depends on.
  std::uint32_t dependencies() const;
  bool depends_on(VariableId v) const { return (dependencies() & v.bit()) != 0; }
  std::size_t hash() const;

  bool is_literal() const { return op() == Op::literal; }
  bool is_literal(double v) const { return is_literal() && value() == v; }
  bool is_zero() const { return is_literal(0.0); }
  bool is_one() const { return is_literal(1.0); }

  const Node* id() const { return node_.get(); }

 private:
  explicit Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  struct EmptyTag {};
  explicit Expression(EmptyTag) {}
  friend struct Node;
  friend Expression make_node(Node&&);

  std::shared_ptr<const Node> node_;
};

struct Node {
  Op op = Op::literal;
  double value = 0.0;
  VariableId var = VariableId::t(0);
  Expression a{Expression::EmptyTag{}};
  Expression b{Expression::EmptyTag{}};
  std::uint32_t deps = 0;
  std::size_t hash = 0;
};

// Simplifying constructors.
Expression operator-(const Expression& a);
Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression pow(const Expression& base, const Expression& exponent);
Expression sin(const Expression& a);
Expression cos(const Expression& a);
Expression tan(const Expression& a);
Expression exp(const Expression& a);
Expression log(const Expression& a);
Expression sqrt(const Expression& a);
Expression sinh(const Expression& a);
Expression cosh(const Expression& a);
Expression make_unary(Op op, const Expression& a);
Expression make_binary(Op op, const Expression& a, const Expression& b);

/// Sum of a list; empty sums are 0.
Expression sum(std::span<const Expression> terms);

/// Structural equality (same tree shape, ops, literals and variables).
bool structurally_equal(const Expression& a, const Expression& b);

/// Prints with minimal parentheses; `parse(to_string(e))` reproduces a
/// parsed tree exactly.
std::string to_string(const Expression& e);

/// Parses the expression grammar. Variable indices are checked against the
/// declared temporal dimension `m` and spatial dimension `n`.
Expression parse(std::string_view text, int m, int n);

/// Values for jet variables, with the declared dimensions.
class Bindings {
 public:
  Bindings(int m, int n);

  int m() const { return m_; }
  int n() const { return n_; }

  Bindings& set(VariableId var, double value);
  bool is_bound(VariableId var) const { return (bound_ & var.bit()) != 0; }
  double get(VariableId var) const;
  std::uint32_t bound_mask() const { return bound_; }
  const std::array<double, kNumSlots>& values() const { return values_; }

 private:
  int m_;
  int n_;
  std::uint32_t bound_ = 0;
  std::array<double, kNumSlots> values_{};
};

/// Recursive evaluation. Throws EvaluationError for unbound variables and
/// domain errors (division by zero, log of non-positive, ...).
double evaluate(const Expression& e, const Bindings& b);

/// Exact partial derivative, simplified.
Expression differentiate(const Expression& e, VariableId var);

/// Rebuilds through the simplifying constructors.
Expression simplify(const Expression& e);

/// Simultaneous substitution of variables (indexed by slot) with expressions.
/// Slots mapped to nullptr are left untouched.
using Substitution = std::array<const Expression*, kNumSlots>;
Expression substitute(const Expression& e, const Substitution& sub);

/// Memoized differentiation. Reusing one cache across many derivatives of
/// related expressions keeps the resulting DAGs shared.
class DerivativeCache {
 public:
  Expression operator()(const Expression& e, VariableId var);

 private:
  struct Key {
    const Node* node;
    int slot;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<const void*>{}(k.node) * 31 + static_cast<std::size_t>(k.slot);
    }
  };
  std::unordered_map<Key, std::pair<Expression, Expression>, KeyHash> memo_;
};

/// Compiled evaluator for a fixed set of expressions. Common subexpressions
/// are merged, so evaluating many related components at one point costs a
/// single linear sweep.
class Tape {
 public:
  Tape() = default;
  explicit Tape(std::span<const Expression> roots);

  std::size_t num_outputs() const { return outputs_.size(); }
  std::size_t num_instructions() const { return code_.size(); }
  /// Union of the dependency masks of all roots.
  std::uint32_t dependencies() const { return deps_; }

  void evaluate(const Bindings& b, std::span<double> out) const;
  std::vector<double> evaluate(const Bindings& b) const;

 private:
  struct Instr {
    Op op;
    std::int32_t a;
    std::int32_t b;
    double value;
    std::int32_t slot;
  };
  std::vector<Instr> code_;
  std::vector<Expression> origin_;  // per instruction, for error messages
  std::vector<std::int32_t> outputs_;
  std::uint32_t deps_ = 0;
};

}  // namespace jetkcc
