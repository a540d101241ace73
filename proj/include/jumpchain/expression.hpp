#pragma once

// Small runtime expression language for user-defined kernels and fields.
//
//   expr    := cmp
//   cmp     := sum (('<' | '<=' | '>' | '>=' | '==' | '!=') sum)?     -> 1 or 0
//   sum     := prod (('+' | '-') prod)*
//   prod    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := atom ('^' unary)?                                     right assoc
//   atom    := number | name | name '(' args ')' | '(' expr ')' | '|' expr '|'
//
// Functions: exp log sqrt abs sin cos tan tanh gamma floor step(x)=1_{x>=0}
// min max pow. Names are resolved against a caller-supplied variable table.

#include <cctype>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace jumpchain {

class Expression {
 public:
  Expression() = default;

  /// Parses src; every identifier must appear in variables (or be pi / e).
  Expression(const std::string& src, const std::vector<std::string>& variables)
      : source_(src), vars_(variables) {
    Parser p{src, vars_, 0};
    root_ = p.parse_expr();
    p.skip_ws();
    if (p.pos != src.size()) p.fail("unexpected '" + std::string(1, src[p.pos]) + "'");
  }

  /// values[i] is the value of variables[i] given at construction.
  double operator()(const double* values) const { return root_ ? eval(*root_, values) : 0.0; }

  const std::string& source() const { return source_; }
  bool empty() const { return !root_; }

 private:
  enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Lt, Le, Gt, Ge, Eq, Ne, Call };

  struct Node {
    Op op = Op::Num;
    double value = 0.0;
    std::size_t var = 0;
    std::string fn;
    std::vector<std::shared_ptr<Node>> args;
  };
  using NodePtr = std::shared_ptr<Node>;

  struct Parser {
    const std::string& s;
    const std::vector<std::string>& vars;
    std::size_t pos;
    int bar_depth = 0;

    [[noreturn]] void fail(const std::string& what) const {
      throw ConfigError("expression '" + s + "' at " + std::to_string(pos) + ": " + what);
    }
    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(const char* tok) {
      skip_ws();
      const std::string t(tok);
      if (s.compare(pos, t.size(), t) == 0) {
        pos += t.size();
        return true;
      }
      return false;
    }
    static NodePtr binary(Op op, NodePtr a, NodePtr b) {
      auto n = std::make_shared<Node>();
      n->op = op;
      n->args = {std::move(a), std::move(b)};
      return n;
    }

    NodePtr parse_expr() {
      NodePtr lhs = parse_sum();
      struct C { const char* tok; Op op; };
      static const C cmps[] = {{"<=", Op::Le}, {">=", Op::Ge}, {"==", Op::Eq}, {"!=", Op::Ne},
                               {"<", Op::Lt},  {">", Op::Gt}};
      for (const auto& c : cmps)
        if (eat(c.tok)) return binary(c.op, lhs, parse_sum());
      return lhs;
    }
    NodePtr parse_sum() {
      NodePtr lhs = parse_prod();
      for (;;) {
        if (eat("+")) lhs = binary(Op::Add, lhs, parse_prod());
        else if (eat("-")) lhs = binary(Op::Sub, lhs, parse_prod());
        else return lhs;
      }
    }
    NodePtr parse_prod() {
      NodePtr lhs = parse_unary();
      for (;;) {
        if (eat("*")) lhs = binary(Op::Mul, lhs, parse_unary());
        else if (eat("/")) lhs = binary(Op::Div, lhs, parse_unary());
        else return lhs;
      }
    }
    NodePtr parse_unary() {
      if (eat("-")) {
        auto n = std::make_shared<Node>();
        n->op = Op::Neg;
        n->args = {parse_unary()};
        return n;
      }
      if (eat("+")) return parse_unary();
      return parse_power();
    }
    NodePtr parse_power() {
      NodePtr base = parse_atom();
      if (eat("^")) return binary(Op::Pow, base, parse_unary());
      return base;
    }
    NodePtr parse_atom() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end");
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        NodePtr e = parse_expr();
        if (!eat(")")) fail("expected ')'");
        return e;
      }
      if (c == '|') {
        ++pos;
        ++bar_depth;
        NodePtr e = parse_expr();
        --bar_depth;
        if (!eat("|")) fail("expected closing '|'");
        auto n = std::make_shared<Node>();
        n->op = Op::Call;
        n->fn = "abs";
        n->args = {e};
        return n;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(s.substr(pos), &used);
        } catch (const std::exception&) {
          fail("bad number");
        }
        pos += used;
        auto n = std::make_shared<Node>();
        n->value = v;
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        const std::string name = s.substr(start, pos - start);
        skip_ws();
        if (pos < s.size() && s[pos] == '(') {
          ++pos;
          auto n = std::make_shared<Node>();
          n->op = Op::Call;
          n->fn = name;
          if (!eat(")")) {
            do n->args.push_back(parse_expr());
            while (eat(","));
            if (!eat(")")) fail("expected ')' after arguments");
          }
          check_call(*n);
          return n;
        }
        for (std::size_t i = 0; i < vars.size(); ++i) {
          if (vars[i] == name) {
            auto n = std::make_shared<Node>();
            n->op = Op::Var;
            n->var = i;
            return n;
          }
        }
        auto n = std::make_shared<Node>();
        if (name == "pi") n->value = std::numbers::pi;
        else if (name == "e") n->value = std::numbers::e;
        else fail("unknown variable '" + name + "'");
        return n;
      }
      fail("unexpected '" + std::string(1, c) + "'");
    }
    void check_call(const Node& n) const {
      static const char* unary[] = {"exp", "log", "sqrt", "abs", "sin", "cos", "tan", "tanh", "gamma", "floor", "step"};
      for (const char* f : unary)
        if (n.fn == f) {
          if (n.args.size() != 1) fail(n.fn + " takes one argument");
          return;
        }
      if (n.fn == "min" || n.fn == "max" || n.fn == "pow") {
        if (n.args.size() != 2) fail(n.fn + " takes two arguments");
        return;
      }
      fail("unknown function '" + n.fn + "'");
    }
  };

  static double eval(const Node& n, const double* v) {
    switch (n.op) {
      case Op::Num: return n.value;
      case Op::Var: return v[n.var];
      case Op::Neg: return -eval(*n.args[0], v);
      case Op::Add: return eval(*n.args[0], v) + eval(*n.args[1], v);
      case Op::Sub: return eval(*n.args[0], v) - eval(*n.args[1], v);
      case Op::Mul: return eval(*n.args[0], v) * eval(*n.args[1], v);
      case Op::Div: return eval(*n.args[0], v) / eval(*n.args[1], v);
      case Op::Pow: return std::pow(eval(*n.args[0], v), eval(*n.args[1], v));
      case Op::Lt: return eval(*n.args[0], v) < eval(*n.args[1], v) ? 1.0 : 0.0;
      case Op::Le: return eval(*n.args[0], v) <= eval(*n.args[1], v) ? 1.0 : 0.0;
      case Op::Gt: return eval(*n.args[0], v) > eval(*n.args[1], v) ? 1.0 : 0.0;
      case Op::Ge: return eval(*n.args[0], v) >= eval(*n.args[1], v) ? 1.0 : 0.0;
      case Op::Eq: return eval(*n.args[0], v) == eval(*n.args[1], v) ? 1.0 : 0.0;
      case Op::Ne: return eval(*n.args[0], v) != eval(*n.args[1], v) ? 1.0 : 0.0;
      case Op::Call: break;
    }
    const double a = eval(*n.args[0], v);
    const std::string& f = n.fn;
    if (f == "exp") return std::exp(a);
    if (f == "log") return std::log(a);
    if (f == "sqrt") return std::sqrt(a);
    if (f == "abs") return std::abs(a);
    if (f == "sin") return std::sin(a);
    if (f == "cos") return std::cos(a);
    if (f == "tan") return std::tan(a);
    if (f == "tanh") return std::tanh(a);
    if (f == "gamma") return std::tgamma(a);
    if (f == "floor") return std::floor(a);
    if (f == "step") return a >= 0.0 ? 1.0 : 0.0;
    const double b = eval(*n.args[1], v);
    if (f == "min") return std::min(a, b);
    if (f == "max") return std::max(a, b);
    return std::pow(a, b);
  }

  std::string source_;
  std::vector<std::string> vars_;
  NodePtr root_;
};

}  // namespace jumpchain
