#include "jetkcc/expr.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <optional>
#include <unordered_map>

namespace jetkcc {

// ---------------------------------------------------------------------------
// VariableId

VariableId VariableId::t(int alpha) {
  if (alpha < 0 || alpha >= kMaxDim) throw PreconditionError("temporal index out of range");
  return {Kind::temporal, -1, alpha};
}

VariableId VariableId::x(int i) {
  if (i < 0 || i >= kMaxDim) throw PreconditionError("spatial index out of range");
  return {Kind::spatial, i, -1};
}

VariableId VariableId::v(int i, int alpha) {
  if (i < 0 || i >= kMaxDim || alpha < 0 || alpha >= kMaxDim) {
    throw PreconditionError("velocity index out of range");
  }
  return {Kind::velocity, i, alpha};
}

VariableId VariableId::from_slot(int slot) {
  if (slot < kMaxDim) return t(slot);
  if (slot < 2 * kMaxDim) return x(slot - kMaxDim);
  const int k = slot - 2 * kMaxDim;
  return v(k / kMaxDim, k % kMaxDim);
}

int VariableId::slot() const {
  switch (kind_) {
    case Kind::temporal:
      return temporal_;
    case Kind::spatial:
      return kMaxDim + spatial_;
    case Kind::velocity:
      return 2 * kMaxDim + spatial_ * kMaxDim + temporal_;
  }
  return 0;
}

std::string VariableId::name() const {
  switch (kind_) {
    case Kind::temporal:
      return "t" + std::to_string(temporal_ + 1);
    case Kind::spatial:
      return "x" + std::to_string(spatial_ + 1);
    case Kind::velocity:
      return "v" + std::to_string(spatial_ + 1) + "_" + std::to_string(temporal_ + 1);
  }
  return {};
}

std::uint32_t temporal_mask() { return (std::uint32_t{1} << kMaxDim) - 1; }
std::uint32_t spatial_mask() { return temporal_mask() << kMaxDim; }
std::uint32_t velocity_mask() {
  return ((std::uint32_t{1} << (kMaxDim * kMaxDim)) - 1) << (2 * kMaxDim);
}

bool is_unary(Op op) { return op >= Op::neg && op <= Op::cosh; }
bool is_binary(Op op) { return op >= Op::add; }

// ---------------------------------------------------------------------------
// Nodes

namespace {

std::size_t mix(std::size_t h, std::size_t v) {
  return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

std::size_t hash_double(double v) {
  if (v == 0.0) v = 0.0;
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return std::hash<std::uint64_t>{}(bits);
}

}  // namespace

Expression make_node(Node&& n) {
  std::size_t h = std::hash<int>{}(static_cast<int>(n.op));
  switch (n.op) {
    case Op::literal:
    case Op::constant:
      h = mix(h, hash_double(n.value));
      n.deps = 0;
      break;
    case Op::variable:
      h = mix(h, static_cast<std::size_t>(n.var.slot()));
      n.deps = n.var.bit();
      break;
    default:
      h = mix(h, n.a.hash());
      n.deps = n.a.dependencies();
      if (is_binary(n.op)) {
        h = mix(h, n.b.hash());
        n.deps |= n.b.dependencies();
      }
  }
  n.hash = h;
  return Expression(std::make_shared<const Node>(std::move(n)));
}

namespace {

Expression literal_node(double v) {
  if (v == 0.0) v = 0.0;  // no negative zero
  Node n;
  n.op = Op::literal;
  n.value = v;
  return make_node(std::move(n));
}

const Expression& shared_literal(int which) {
  static const Expression zero = literal_node(0.0);
  static const Expression one = literal_node(1.0);
  return which == 0 ? zero : one;
}

}  // namespace

Expression::Expression() : Expression(shared_literal(0)) {}

Expression::Expression(double value)
    : Expression(value == 0.0 ? shared_literal(0)
                              : (value == 1.0 ? shared_literal(1) : literal_node(value))) {}

Expression Expression::variable(VariableId var) {
  Node n;
  n.op = Op::variable;
  n.var = var;
  return make_node(std::move(n));
}

Expression Expression::pi() {
  Node n;
  n.op = Op::constant;
  n.value = std::numbers::pi;
  return make_node(std::move(n));
}

Expression Expression::euler() {
  Node n;
  n.op = Op::constant;
  n.value = std::numbers::e;
  return make_node(std::move(n));
}

Expression Expression::raw_unary(Op op, Expression arg) {
  Node n;
  n.op = op;
  n.a = std::move(arg);
  return make_node(std::move(n));
}

Expression Expression::raw_binary(Op op, Expression lhs, Expression rhs) {
  Node n;
  n.op = op;
  n.a = std::move(lhs);
  n.b = std::move(rhs);
  return make_node(std::move(n));
}

Op Expression::op() const { return node_->op; }
double Expression::value() const { return node_->value; }
VariableId Expression::var() const { return node_->var; }
const Expression& Expression::lhs() const { return node_->a; }
const Expression& Expression::rhs() const { return node_->b; }
std::uint32_t Expression::dependencies() const { return node_->deps; }
std::size_t Expression::hash() const { return node_->hash; }

// ---------------------------------------------------------------------------
// Numeric kernels shared by folding and evaluation

namespace {

bool integral_exponent(double e) {
  return std::isfinite(e) && e == std::floor(e) && std::fabs(e) <= 1024.0;
}

double int_power(double base, double e) {
  const long k = static_cast<long>(std::fabs(e));
  double r = 1.0;
  for (long i = 0; i < k; ++i) r *= base;
  return e < 0 ? 1.0 / r : r;
}

// Returns false on a domain error.
bool apply_unary(Op op, double a, double& out) {
  switch (op) {
    case Op::neg:
      out = -a;
      return true;
    case Op::sin:
      out = std::sin(a);
      return true;
    case Op::cos:
      out = std::cos(a);
      return true;
    case Op::tan:
      out = std::tan(a);
      return true;
    case Op::exp:
      out = std::exp(a);
      return true;
    case Op::log:
      if (!(a > 0.0)) return false;
      out = std::log(a);
      return true;
    case Op::sqrt:
      if (!(a >= 0.0)) return false;
      out = std::sqrt(a);
      return true;
    case Op::sinh:
      out = std::sinh(a);
      return true;
    case Op::cosh:
      out = std::cosh(a);
      return true;
    default:
      return false;
  }
}

bool apply_binary(Op op, double a, double b, double& out) {
  switch (op) {
    case Op::add:
      out = a + b;
      return true;
    case Op::sub:
      out = a - b;
      return true;
    case Op::mul:
      out = a * b;
      return true;
    case Op::div:
      if (b == 0.0) return false;
      out = a / b;
      return true;
    case Op::pow:
      if (integral_exponent(b)) {
        if (a == 0.0 && b < 0.0) return false;
        out = int_power(a, b);
        return true;
      }
      if (!(a > 0.0)) return false;
      out = std::pow(a, b);
      return true;
    default:
      return false;
  }
}

const char* domain_message(Op op) {
  switch (op) {
    case Op::div:
      return "division by zero";
    case Op::log:
      return "log of non-positive argument";
    case Op::sqrt:
      return "sqrt of negative argument";
    case Op::pow:
      return "invalid power (zero to a negative power or non-integer power of a non-positive base)";
    default:
      return "domain error";
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Simplifying constructors

Expression make_unary(Op op, const Expression& a) {
  if (a.is_literal()) {
    double v;
    if (apply_unary(op, a.value(), v)) return Expression(v);
  }
  if (op == Op::neg && a.op() == Op::neg) return a.arg();
  return Expression::raw_unary(op, a);
}

Expression make_binary(Op op, const Expression& a, const Expression& b) {
  if (a.is_literal() && b.is_literal()) {
    double v;
    if (apply_binary(op, a.value(), b.value(), v) && std::isfinite(v)) return Expression(v);
  }
  switch (op) {
    case Op::add:
      if (a.is_zero()) return b;
      if (b.is_zero()) return a;
      break;
    case Op::sub:
      if (b.is_zero()) return a;
      if (a.is_zero()) return make_unary(Op::neg, b);
      break;
    case Op::mul:
      if (a.is_zero() || b.is_zero()) return Expression(0.0);
      if (a.is_one()) return b;
      if (b.is_one()) return a;
      if (a.is_literal(-1.0)) return make_unary(Op::neg, b);
      if (b.is_literal(-1.0)) return make_unary(Op::neg, a);
      if (b.is_literal() && !a.is_literal()) return make_binary(Op::mul, b, a);
      if (a.is_literal() && b.op() == Op::mul && b.lhs().is_literal()) {
        return make_binary(Op::mul, Expression(a.value() * b.lhs().value()), b.rhs());
      }
      break;
    case Op::div:
      if (b.is_one()) return a;
      if (b.is_literal(-1.0)) return make_unary(Op::neg, a);
      if (a.is_zero() && !b.is_zero()) return Expression(0.0);
      break;
    case Op::pow:
      if (b.is_one()) return a;
      if (b.is_zero()) return Expression(1.0);
      if (a.is_zero() && b.is_literal() && b.value() > 0.0) return Expression(0.0);
      if (a.is_one()) return Expression(1.0);
      break;
    default:
      break;
  }
  return Expression::raw_binary(op, a, b);
}

Expression operator-(const Expression& a) { return make_unary(Op::neg, a); }
Expression operator+(const Expression& a, const Expression& b) { return make_binary(Op::add, a, b); }
Expression operator-(const Expression& a, const Expression& b) { return make_binary(Op::sub, a, b); }
Expression operator*(const Expression& a, const Expression& b) { return make_binary(Op::mul, a, b); }
Expression operator/(const Expression& a, const Expression& b) { return make_binary(Op::div, a, b); }
Expression pow(const Expression& base, const Expression& e) { return make_binary(Op::pow, base, e); }
Expression sin(const Expression& a) { return make_unary(Op::sin, a); }
Expression cos(const Expression& a) { return make_unary(Op::cos, a); }
Expression tan(const Expression& a) { return make_unary(Op::tan, a); }
Expression exp(const Expression& a) { return make_unary(Op::exp, a); }
Expression log(const Expression& a) { return make_unary(Op::log, a); }
Expression sqrt(const Expression& a) { return make_unary(Op::sqrt, a); }
Expression sinh(const Expression& a) { return make_unary(Op::sinh, a); }
Expression cosh(const Expression& a) { return make_unary(Op::cosh, a); }

Expression sum(std::span<const Expression> terms) {
  Expression acc;
  for (const auto& t : terms) acc = acc + t;
  return acc;
}

bool structurally_equal(const Expression& a, const Expression& b) {
  if (a.id() == b.id()) return true;
  if (a.hash() != b.hash() || a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::literal:
    case Op::constant:
      return a.value() == b.value();
    case Op::variable:
      return a.var() == b.var();
    default:
      if (!structurally_equal(a.lhs(), b.lhs())) return false;
      return !is_binary(a.op()) || structurally_equal(a.rhs(), b.rhs());
  }
}

// ---------------------------------------------------------------------------
// Printing

namespace {

const char* function_name(Op op) {
  switch (op) {
    case Op::sin:
      return "sin";
    case Op::cos:
      return "cos";
    case Op::tan:
      return "tan";
    case Op::exp:
      return "exp";
    case Op::log:
      return "log";
    case Op::sqrt:
      return "sqrt";
    case Op::sinh:
      return "sinh";
    case Op::cosh:
      return "cosh";
    default:
      return "?";
  }
}

std::string format_number(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// Binding strength: 1 sums, 2 products, 3 unary minus, 4 power, 5 atoms.
int precedence(const Expression& e) {
  switch (e.op()) {
    case Op::literal:
      return e.value() < 0 ? 3 : 5;
    case Op::add:
    case Op::sub:
      return 1;
    case Op::mul:
    case Op::div:
      return 2;
    case Op::neg:
      return 3;
    case Op::pow:
      return 4;
    default:
      return 5;
  }
}

void print(const Expression& e, std::string& out);

void print_child(const Expression& e, int min_precedence, std::string& out) {
  if (precedence(e) < min_precedence) {
    out += '(';
    print(e, out);
    out += ')';
  } else {
    print(e, out);
  }
}

void print(const Expression& e, std::string& out) {
  switch (e.op()) {
    case Op::literal:
      out += format_number(e.value());
      return;
    case Op::constant:
      out += e.value() == std::numbers::pi ? "pi" : "e";
      return;
    case Op::variable:
      out += e.var().name();
      return;
    case Op::neg:
      out += '-';
      print_child(e.arg(), 3, out);
      return;
    case Op::add:
    case Op::sub:
      print_child(e.lhs(), 1, out);
      out += e.op() == Op::add ? " + " : " - ";
      print_child(e.rhs(), 2, out);
      return;
    case Op::mul:
    case Op::div:
      print_child(e.lhs(), 2, out);
      out += e.op() == Op::mul ? "*" : "/";
      print_child(e.rhs(), 3, out);
      return;
    case Op::pow:
      print_child(e.lhs(), 5, out);
      out += '^';
      print_child(e.rhs(), 3, out);
      return;
    default:
      out += function_name(e.op());
      out += '(';
      print(e.arg(), out);
      out += ')';
  }
}

}  // namespace

std::string to_string(const Expression& e) {
  std::string out;
  print(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Bindings and evaluation

Bindings::Bindings(int m, int n) : m_(m), n_(n) {
  if (m < 1 || n < 1 || m > kMaxDim || n > kMaxDim) {
    throw PreconditionError("dimensions must satisfy 1 <= m, n <= " + std::to_string(kMaxDim));
  }
}

Bindings& Bindings::set(VariableId var, double value) {
  const bool in_range = (var.temporal() < m_) && (var.spatial() < n_);
  if (!in_range) throw PreconditionError("variable " + var.name() + " outside declared dimensions");
  values_[static_cast<std::size_t>(var.slot())] = value;
  bound_ |= var.bit();
  return *this;
}

double Bindings::get(VariableId var) const {
  if (!is_bound(var)) throw EvaluationError("unbound variable " + var.name());
  return values_[static_cast<std::size_t>(var.slot())];
}

double evaluate(const Expression& e, const Bindings& b) {
  const Expression roots[] = {e};
  return Tape(roots).evaluate(b)[0];
}

// ---------------------------------------------------------------------------
// Differentiation, simplification, substitution

Expression DerivativeCache::operator()(const Expression& e, VariableId var) {
  if (!e.depends_on(var)) return Expression(0.0);
  const Key key{e.id(), var.slot()};
  if (auto it = memo_.find(key); it != memo_.end()) return it->second.second;

  auto& d = *this;
  Expression r;
  switch (e.op()) {
    case Op::variable:
      r = Expression(1.0);
      break;
    case Op::neg:
      r = -d(e.arg(), var);
      break;
    case Op::add:
      r = d(e.lhs(), var) + d(e.rhs(), var);
      break;
    case Op::sub:
      r = d(e.lhs(), var) - d(e.rhs(), var);
      break;
    case Op::mul:
      r = d(e.lhs(), var) * e.rhs() + e.lhs() * d(e.rhs(), var);
      break;
    case Op::div: {
      const Expression& num = e.lhs();
      const Expression& den = e.rhs();
      r = d(num, var) / den;
      if (den.depends_on(var)) r = r - num * d(den, var) / (den * den);
      break;
    }
    case Op::pow: {
      const Expression& base = e.lhs();
      const Expression& ex = e.rhs();
      if (!ex.depends_on(var)) {
        r = ex * pow(base, ex - Expression(1.0)) * d(base, var);
      } else {
        r = e * (d(ex, var) * log(base) + ex * d(base, var) / base);
      }
      break;
    }
    case Op::sin:
      r = cos(e.arg()) * d(e.arg(), var);
      break;
    case Op::cos:
      r = -sin(e.arg()) * d(e.arg(), var);
      break;
    case Op::tan:
      r = d(e.arg(), var) / (cos(e.arg()) * cos(e.arg()));
      break;
    case Op::exp:
      r = e * d(e.arg(), var);
      break;
    case Op::log:
      r = d(e.arg(), var) / e.arg();
      break;
    case Op::sqrt:
      r = d(e.arg(), var) / (Expression(2.0) * e);
      break;
    case Op::sinh:
      r = cosh(e.arg()) * d(e.arg(), var);
      break;
    case Op::cosh:
      r = sinh(e.arg()) * d(e.arg(), var);
      break;
    case Op::literal:
    case Op::constant:
      break;
  }
  memo_.emplace(key, std::make_pair(e, r));
  return r;
}

Expression differentiate(const Expression& e, VariableId var) {
  DerivativeCache cache;
  return cache(e, var);
}

namespace {

template <class Leaf>
Expression rebuild(const Expression& e, std::unordered_map<const Node*, Expression>& memo,
                   const Leaf& leaf) {
  if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
  Expression r;
  if (auto replaced = leaf(e)) {
    r = *replaced;
  } else if (is_unary(e.op())) {
    r = make_unary(e.op(), rebuild(e.arg(), memo, leaf));
  } else if (is_binary(e.op())) {
    r = make_binary(e.op(), rebuild(e.lhs(), memo, leaf), rebuild(e.rhs(), memo, leaf));
  } else {
    r = e;
  }
  memo.emplace(e.id(), r);
  return r;
}

}  // namespace

Expression simplify(const Expression& e) {
  std::unordered_map<const Node*, Expression> memo;
  return rebuild(e, memo, [](const Expression&) -> std::optional<Expression> { return {}; });
}

Expression substitute(const Expression& e, const Substitution& sub) {
  std::uint32_t mask = 0;
  for (int s = 0; s < kNumSlots; ++s) {
    if (sub[static_cast<std::size_t>(s)] != nullptr) mask |= std::uint32_t{1} << s;
  }
  std::unordered_map<const Node*, Expression> memo;
  return rebuild(e, memo, [&](const Expression& x) -> std::optional<Expression> {
    if ((x.dependencies() & mask) == 0) return x;
    if (x.op() == Op::variable) return *sub[static_cast<std::size_t>(x.var().slot())];
    return {};
  });
}

// ---------------------------------------------------------------------------
// Tape

namespace {

struct InstrKey {
  Op op;
  std::uint64_t value_bits;
  std::int32_t a;
  std::int32_t b;
  std::int32_t slot;
  bool operator==(const InstrKey&) const = default;
};

struct InstrKeyHash {
  std::size_t operator()(const InstrKey& k) const {
    std::size_t h = std::hash<int>{}(static_cast<int>(k.op));
    h = mix(h, std::hash<std::uint64_t>{}(k.value_bits));
    h = mix(h, static_cast<std::size_t>(k.a));
    h = mix(h, static_cast<std::size_t>(k.b));
    return mix(h, static_cast<std::size_t>(k.slot));
  }
};

}  // namespace

Tape::Tape(std::span<const Expression> roots) {
  std::unordered_map<const Node*, std::int32_t> seen;
  std::unordered_map<InstrKey, std::int32_t, InstrKeyHash> cse;

  auto emit = [&](auto&& self, const Expression& e) -> std::int32_t {
    if (auto it = seen.find(e.id()); it != seen.end()) return it->second;
    InstrKey key{e.op(), 0, -1, -1, -1};
    switch (e.op()) {
      case Op::literal:
      case Op::constant: {
        double v = e.value();
        std::memcpy(&key.value_bits, &v, sizeof v);
        break;
      }
      case Op::variable:
        key.slot = e.var().slot();
        break;
      default:
        key.a = self(self, e.lhs());
        if (is_binary(e.op())) key.b = self(self, e.rhs());
    }
    std::int32_t idx;
    if (auto it = cse.find(key); it != cse.end()) {
      idx = it->second;
    } else {
      idx = static_cast<std::int32_t>(code_.size());
      double v;
      std::memcpy(&v, &key.value_bits, sizeof v);
      code_.push_back({key.op, key.a, key.b, v, key.slot});
      origin_.push_back(e);
      cse.emplace(key, idx);
    }
    seen.emplace(e.id(), idx);
    return idx;
  };

  outputs_.reserve(roots.size());
  for (const auto& r : roots) {
    outputs_.push_back(emit(emit, r));
    deps_ |= r.dependencies();
  }
}

void Tape::evaluate(const Bindings& b, std::span<double> out) const {
  if (out.size() != outputs_.size()) throw PreconditionError("tape output size mismatch");
  if (const std::uint32_t missing = deps_ & ~b.bound_mask(); missing != 0) {
    throw EvaluationError("unbound variable " +
                          VariableId::from_slot(std::countr_zero(missing)).name());
  }
  std::vector<double> reg(code_.size());
  const auto& vals = b.values();
  for (std::size_t k = 0; k < code_.size(); ++k) {
    const Instr& in = code_[k];
    double r = 0.0;
    bool ok = true;
    switch (in.op) {
      case Op::literal:
      case Op::constant:
        r = in.value;
        break;
      case Op::variable:
        r = vals[static_cast<std::size_t>(in.slot)];
        break;
      default:
        if (is_binary(in.op)) {
          ok = apply_binary(in.op, reg[static_cast<std::size_t>(in.a)],
                            reg[static_cast<std::size_t>(in.b)], r);
        } else {
          ok = apply_unary(in.op, reg[static_cast<std::size_t>(in.a)], r);
        }
    }
    if (!ok) {
      std::string text = to_string(origin_[k]);
      if (text.size() > 200) text = text.substr(0, 200) + "...";
      throw EvaluationError(std::string(domain_message(in.op)) + " in " + text);
    }
    reg[k] = r;
  }
  for (std::size_t k = 0; k < outputs_.size(); ++k) {
    out[k] = reg[static_cast<std::size_t>(outputs_[k])];
  }
}

std::vector<double> Tape::evaluate(const Bindings& b) const {
  std::vector<double> out(outputs_.size());
  evaluate(b, out);
  return out;
}

}  // namespace jetkcc
