#include <cctype>
#include <cstdlib>
#include <string>

#include "jetkcc/expr.hpp"

namespace jetkcc {

namespace {

// Recursive descent over
//   expr  := term (('+' | '-') term)*
//   term  := unary (('*' | '/') unary)*
//   unary := '-' unary | power
//   power := atom ('^' unary)?
//   atom  := number | identifier | function '(' expr ')' | '(' expr ')'
class Parser {
 public:
  Parser(std::string_view text, int m, int n) : text_(text), m_(m), n_(n) {}

  Expression parse_all() {
    Expression e = expr();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(ParseError::Reason::syntax, pos_, "syntax error: " + msg);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expression expr() {
    Expression lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = Expression::raw_binary(Op::add, lhs, term());
      } else if (accept('-')) {
        lhs = Expression::raw_binary(Op::sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Expression term() {
    Expression lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = Expression::raw_binary(Op::mul, lhs, unary());
      } else if (accept('/')) {
        lhs = Expression::raw_binary(Op::div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  Expression unary() {
    if (accept('-')) return Expression::raw_unary(Op::neg, unary());
    return power();
  }

  Expression power() {
    Expression base = atom();
    if (accept('^')) return Expression::raw_binary(Op::pow, base, unary());
    return base;
  }

  Expression atom() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expression e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Expression number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t k = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++k;
      }
      return k;
    };
    std::size_t count = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      count += digits();
    }
    if (count == 0) fail("malformed number");
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && std::isdigit(static_cast<unsigned char>(text_[look]))) {
        pos_ = look;
        digits();
      }
    }
    const std::string literal(text_.substr(start, pos_ - start));
    return Expression(std::strtod(literal.c_str(), nullptr));
  }

  int index(std::size_t& p) {
    const std::size_t start = p;
    int value = 0;
    while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
      if (value > 1000) break;
      value = value * 10 + (text_[p] - '0');
      ++p;
    }
    return p == start ? -1 : value;
  }

  Expression identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view name = text_.substr(start, pos_ - start);

    static constexpr std::pair<std::string_view, Op> kFunctions[] = {
        {"sin", Op::sin},   {"cos", Op::cos},   {"tan", Op::tan},   {"exp", Op::exp},
        {"log", Op::log},   {"sqrt", Op::sqrt}, {"sinh", Op::sinh}, {"cosh", Op::cosh}};
    for (const auto& [fname, op] : kFunctions) {
      if (name == fname) {
        if (!accept('(')) fail("expected '(' after " + std::string(name));
        Expression arg = expr();
        if (!accept(')')) fail("expected ')'");
        return Expression::raw_unary(op, arg);
      }
    }
    if (name == "pi") return Expression::pi();
    if (name == "e") return Expression::euler();

    // t<d>, x<d>, v<d>_<d>
    auto out_of_range = [&](const std::string& what) {
      throw ParseError(ParseError::Reason::index_out_of_range, start,
                       "index out of range in '" + std::string(name) + "' (" + what + ")");
    };
    auto unknown = [&] {
      throw ParseError(ParseError::Reason::unknown_identifier, start,
                       "unknown identifier '" + std::string(name) + "'");
    };
    std::size_t q = start + 1;
    if (name[0] == 't' || name[0] == 'x') {
      const int k = index(q);
      if (k < 0 || q != pos_) unknown();
      const int bound = name[0] == 't' ? m_ : n_;
      if (k < 1 || k > bound) {
        out_of_range(std::string(name[0] == 't' ? "m = " : "n = ") + std::to_string(bound));
      }
      return Expression::variable(name[0] == 't' ? VariableId::t(k - 1) : VariableId::x(k - 1));
    }
    if (name[0] == 'v') {
      const int i = index(q);
      if (i < 0 || q >= pos_ || text_[q] != '_') unknown();
      ++q;
      const int alpha = index(q);
      if (alpha < 0 || q != pos_) unknown();
      if (i < 1 || i > n_) out_of_range("n = " + std::to_string(n_));
      if (alpha < 1 || alpha > m_) out_of_range("m = " + std::to_string(m_));
      return Expression::variable(VariableId::v(i - 1, alpha - 1));
    }
    unknown();
    return {};
  }

  std::string_view text_;
  int m_;
  int n_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression parse(std::string_view text, int m, int n) {
  if (m < 1 || n < 1 || m > kMaxDim || n > kMaxDim) {
    throw PreconditionError("dimensions must satisfy 1 <= m, n <= " + std::to_string(kMaxDim));
  }
  return Parser(text, m, n).parse_all();
}

}  // namespace jetkcc
