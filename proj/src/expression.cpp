#include "utk/expression.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

namespace utk::expr {

namespace {

enum class Tok {
  number, text, ident, lparen, rparen, question, colon,
  bang, star, slash, plus, minus, lt, le, gt, ge, eq, ne, andand, oror, end,
};

struct Token {
  Tok kind = Tok::end;
  std::size_t offset = 0;
  std::string text;
  double number = 0;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](Tok k, std::size_t at, std::size_t len) {
    out.push_back({k, at, std::string(s.substr(at, len)), 0});
    i = at + len;
  };
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
    const std::size_t at = i;
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          j = k;
          while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
      }
      Token t{Tok::number, at, std::string(s.substr(at, j - at)), 0};
      const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
      if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size())
        throw ExprSyntaxError(at, "malformed number '" + t.text + "'");
      out.push_back(std::move(t));
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      push(Tok::ident, at, j - at);
      continue;
    }
    if (c == '\'' || c == '`' || c == '"') {
      const char close = c == '"' ? '"' : '\'';
      const auto end = s.find(close, i + 1);
      if (end == std::string_view::npos) throw ExprSyntaxError(at, "unterminated text literal");
      out.push_back({Tok::text, at, std::string(s.substr(i + 1, end - i - 1)), 0});
      i = end + 1;
      continue;
    }
    const auto two = s.substr(i, 2);
    if (two == "<=") { push(Tok::le, at, 2); continue; }
    if (two == ">=") { push(Tok::ge, at, 2); continue; }
    if (two == "==") { push(Tok::eq, at, 2); continue; }
    if (two == "!=") { push(Tok::ne, at, 2); continue; }
    if (two == "&&") { push(Tok::andand, at, 2); continue; }
    if (two == "||") { push(Tok::oror, at, 2); continue; }
    switch (c) {
      case '(': push(Tok::lparen, at, 1); continue;
      case ')': push(Tok::rparen, at, 1); continue;
      case '?': push(Tok::question, at, 1); continue;
      case ':': push(Tok::colon, at, 1); continue;
      case '!': push(Tok::bang, at, 1); continue;
      case '*': push(Tok::star, at, 1); continue;
      case '/': push(Tok::slash, at, 1); continue;
      case '+': push(Tok::plus, at, 1); continue;
      case '-': push(Tok::minus, at, 1); continue;
      case '<': push(Tok::lt, at, 1); continue;
      case '>': push(Tok::gt, at, 1); continue;
      default: break;
    }
    throw ExprSyntaxError(at, std::string("unexpected character '") + c + "'");
  }
  out.push_back({Tok::end, s.size(), {}, 0});
  return out;
}

// Binary precedence levels, loosest first.
int binary_precedence(Tok t) {
  switch (t) {
    case Tok::oror: return 1;
    case Tok::andand: return 2;
    case Tok::eq: case Tok::ne: return 3;
    case Tok::lt: case Tok::le: case Tok::gt: case Tok::ge: return 4;
    case Tok::plus: case Tok::minus: return 5;
    case Tok::star: case Tok::slash: return 6;
    default: return 0;
  }
}

Expression::Op binary_op(Tok t) {
  using Op = Expression::Op;
  switch (t) {
    case Tok::oror: return Op::logical_or;
    case Tok::andand: return Op::logical_and;
    case Tok::eq: return Op::eq;
    case Tok::ne: return Op::ne;
    case Tok::lt: return Op::lt;
    case Tok::le: return Op::le;
    case Tok::gt: return Op::gt;
    case Tok::ge: return Op::ge;
    case Tok::plus: return Op::add;
    case Tok::minus: return Op::sub;
    case Tok::star: return Op::mul;
    default: return Op::div;
  }
}

const char* describe(Tok t) {
  return t == Tok::end ? "end of expression" : "token";
}

}  // namespace

class Parser {
public:
  Parser(Expression& e, std::vector<Token> tokens) : e_(e), tokens_(std::move(tokens)) {}

  std::uint32_t parse_all() {
    const auto root = parse_ternary();
    if (peek().kind != Tok::end) fail("unexpected '" + peek().text + "'");
    return root;
  }

private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  [[noreturn]] void fail(const std::string& message) const {
    throw ExprSyntaxError(peek().offset, message);
  }

  std::uint32_t add(Expression::Node node) {
    e_.nodes_.push_back(std::move(node));
    return static_cast<std::uint32_t>(e_.nodes_.size() - 1);
  }

  std::uint32_t parse_ternary() {
    const auto cond = parse_binary(1);
    if (peek().kind != Tok::question) return cond;
    const auto at = next().offset;
    const auto a = parse_ternary();
    if (peek().kind != Tok::colon) fail("expected ':' in conditional");
    next();
    const auto b = parse_ternary();
    Expression::Node n;
    n.op = Expression::Op::ternary;
    n.child[0] = cond;
    n.child[1] = a;
    n.child[2] = b;
    n.offset = at;
    return add(std::move(n));
  }

  std::uint32_t parse_binary(int min_prec) {
    auto lhs = parse_unary();
    for (;;) {
      const int prec = binary_precedence(peek().kind);
      if (prec == 0 || prec < min_prec) return lhs;
      const Token op = next();
      const auto rhs = parse_binary(prec + 1);
      Expression::Node n;
      n.op = binary_op(op.kind);
      n.child[0] = lhs;
      n.child[1] = rhs;
      n.offset = op.offset;
      lhs = add(std::move(n));
    }
  }

  std::uint32_t parse_unary() {
    if (peek().kind == Tok::minus || peek().kind == Tok::bang) {
      const Token op = next();
      const auto operand = parse_unary();
      Expression::Node n;
      n.op = op.kind == Tok::minus ? Expression::Op::negate : Expression::Op::logical_not;
      n.child[0] = operand;
      n.offset = op.offset;
      return add(std::move(n));
    }
    return parse_primary();
  }

  std::uint32_t parse_primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::number: {
        Expression::Node n;
        n.value = Scalar(t.number);
        n.offset = t.offset;
        next();
        return add(std::move(n));
      }
      case Tok::text: {
        Expression::Node n;
        n.value = Scalar(t.text);
        n.offset = t.offset;
        next();
        return add(std::move(n));
      }
      case Tok::ident: {
        Expression::Node n;
        n.op = Expression::Op::identifier;
        n.offset = t.offset;
        auto& ids = e_.identifiers_;
        std::size_t slot = 0;
        while (slot < ids.size() && ids[slot] != t.text) ++slot;
        if (slot == ids.size()) ids.push_back(t.text);
        n.slot = static_cast<std::uint32_t>(slot);
        next();
        return add(std::move(n));
      }
      case Tok::lparen: {
        next();
        const auto inner = parse_ternary();
        if (peek().kind != Tok::rparen) fail("expected ')'");
        next();
        return inner;
      }
      default:
        fail(std::string("unexpected ") + (t.kind == Tok::end ? describe(t.kind) : "'" + t.text + "'"));
    }
  }

  Expression& e_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

Expression Expression::parse(std::string_view text) {
  Expression e;
  e.text_ = std::string(text);
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw ExprSyntaxError(0, "empty expression");
  Parser parser(e, tokenize(text));
  e.root_ = parser.parse_all();
  return e;
}

namespace {

double truthy(const Scalar& s, std::size_t offset) {
  if (!s.is_number()) throw Error(ErrorCode::TypeError, "logical operand is text at offset " + std::to_string(offset));
  return s.number() != 0 ? 1.0 : 0.0;
}

double numeric(const Scalar& s, std::size_t offset) {
  if (!s.is_number()) throw Error(ErrorCode::TypeError, "arithmetic on text at offset " + std::to_string(offset));
  return s.number();
}

}  // namespace

Scalar Expression::eval_node(std::uint32_t id, std::span<const Scalar> values, WarningLog* log) const {
  const Node& n = nodes_[id];
  switch (n.op) {
    case Op::literal: return n.value;
    case Op::identifier:
      if (n.slot >= values.size())
        throw Error(ErrorCode::UnboundIdentifier, "identifier '" + identifiers_[n.slot] + "' is unbound");
      return values[n.slot];
    case Op::negate: {
      const auto v = eval_node(n.child[0], values, log);
      if (v.is_null()) return v;
      return Scalar(-numeric(v, n.offset));
    }
    case Op::logical_not: {
      const auto v = eval_node(n.child[0], values, log);
      if (v.is_null()) return v;
      return Scalar(truthy(v, n.offset) == 0 ? 1.0 : 0.0);
    }
    case Op::ternary: {
      const auto c = eval_node(n.child[0], values, log);
      if (c.is_null()) return c;
      return eval_node(truthy(c, n.offset) != 0 ? n.child[1] : n.child[2], values, log);
    }
    default: break;
  }

  const auto a = eval_node(n.child[0], values, log);
  const auto b = eval_node(n.child[1], values, log);
  if (a.is_null() || b.is_null()) return Scalar::null();

  switch (n.op) {
    case Op::logical_and: return Scalar(truthy(a, n.offset) != 0 && truthy(b, n.offset) != 0 ? 1.0 : 0.0);
    case Op::logical_or: return Scalar(truthy(a, n.offset) != 0 || truthy(b, n.offset) != 0 ? 1.0 : 0.0);
    case Op::eq: case Op::ne: case Op::lt: case Op::le: case Op::gt: case Op::ge: {
      if (a.is_number() != b.is_number())
        throw Error(ErrorCode::TypeError, "comparison between number and text at offset " + std::to_string(n.offset));
      int cmp;
      if (a.is_number()) cmp = a.number() < b.number() ? -1 : (a.number() > b.number() ? 1 : 0);
      else cmp = a.text().compare(b.text()) < 0 ? -1 : (a.text() == b.text() ? 0 : 1);
      bool r = false;
      switch (n.op) {
        case Op::eq: r = cmp == 0; break;
        case Op::ne: r = cmp != 0; break;
        case Op::lt: r = cmp < 0; break;
        case Op::le: r = cmp <= 0; break;
        case Op::gt: r = cmp > 0; break;
        default: r = cmp >= 0; break;
      }
      return Scalar(r ? 1.0 : 0.0);
    }
    case Op::add: return Scalar(numeric(a, n.offset) + numeric(b, n.offset));
    case Op::sub: return Scalar(numeric(a, n.offset) - numeric(b, n.offset));
    case Op::mul: return Scalar(numeric(a, n.offset) * numeric(b, n.offset));
    case Op::div: {
      const double num = numeric(a, n.offset), den = numeric(b, n.offset);
      if (den == 0) {
        warn(log, "division by zero at offset " + std::to_string(n.offset) + " yields null");
        return Scalar::null();
      }
      return Scalar(num / den);
    }
    default: return Scalar::null();
  }
}

Scalar Expression::eval(std::span<const Scalar> values, WarningLog* log) const {
  return eval_node(root_, values, log);
}

Scalar Expression::eval(const std::map<std::string, Scalar>& bindings, WarningLog* log) const {
  std::vector<Scalar> values;
  values.reserve(identifiers_.size());
  for (const auto& id : identifiers_) {
    const auto it = bindings.find(id);
    if (it == bindings.end()) throw Error(ErrorCode::UnboundIdentifier, "identifier '" + id + "' is unbound");
    values.push_back(it->second);
  }
  return eval(values, log);
}

}  // namespace utk::expr
