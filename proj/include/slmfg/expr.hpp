// Copyright 2026 The slmfg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scalar expressions in t, x, a for one-dimensional problems given in a
// config file, and the problem built from them.
//
// Grammar:
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('+' | '-') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | 't' | 'x' | 'a' | 'pi' | func '(' expr ')' | '(' expr ')'
//   func   := sin cos tan exp log sqrt abs tanh

#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "slmfg/core.hpp"
#include "slmfg/examples.hpp"
#include "slmfg/problem.hpp"

namespace slmfg {

class Expr {
 public:
  Expr() = default;
  explicit Expr(const std::string& text) : text_(text) {
    Parser p{text, 0, &nodes_};
    root_ = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("unexpected character");
  }

  double operator()(double t, double x, double a = 0.0) const {
    return eval(root_, t, x, a);
  }
  const std::string& text() const { return text_; }
  bool uses(char var) const {
    for (const Node& n : nodes_) {
      if (n.op == Op::Var && n.var == var) return true;
    }
    return false;
  }

 private:
  enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Call };
  using Fn = double (*)(double);

  struct Node {
    Op op = Op::Num;
    double value = 0.0;
    char var = 0;
    Fn fn = nullptr;
    int lhs = -1;
    int rhs = -1;
  };

  struct Parser {
    const std::string& s;
    std::size_t pos;
    std::vector<Node>* nodes;

    [[noreturn]] void fail(const std::string& what) const {
      throw ConfigError("expression '" + s + "': " + what + " at offset " +
                        std::to_string(pos));
    }
    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    int add(Node n) {
      nodes->push_back(n);
      return static_cast<int>(nodes->size()) - 1;
    }
    int binary(Op op, int l, int r) {
      Node n;
      n.op = op;
      n.lhs = l;
      n.rhs = r;
      return add(n);
    }
    int parse_expr() {
      int l = parse_term();
      while (true) {
        if (eat('+')) {
          l = binary(Op::Add, l, parse_term());
        } else if (eat('-')) {
          l = binary(Op::Sub, l, parse_term());
        } else {
          return l;
        }
      }
    }
    int parse_term() {
      int l = parse_unary();
      while (true) {
        if (eat('*')) {
          l = binary(Op::Mul, l, parse_unary());
        } else if (eat('/')) {
          l = binary(Op::Div, l, parse_unary());
        } else {
          return l;
        }
      }
    }
    int parse_unary() {
      if (eat('-')) return binary(Op::Neg, parse_unary(), -1);
      if (eat('+')) return parse_unary();
      return parse_power();
    }
    int parse_power() {
      int base = parse_atom();
      if (eat('^')) return binary(Op::Pow, base, parse_unary());
      return base;
    }
    int parse_atom() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end");
      if (eat('(')) {
        int e = parse_expr();
        if (!eat(')')) fail("expected ')'");
        return e;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const char* begin = s.c_str() + pos;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) fail("bad number");
        pos += static_cast<std::size_t>(end - begin);
        Node n;
        n.value = v;
        return add(n);
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t b = pos;
        while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
        const std::string id = s.substr(b, pos - b);
        if (id == "t" || id == "x" || id == "a") {
          Node n;
          n.op = Op::Var;
          n.var = id[0];
          return add(n);
        }
        if (id == "pi") {
          Node n;
          n.value = std::numbers::pi;
          return add(n);
        }
        Fn fn = lookup(id);
        if (!fn) {
          pos = b;
          fail("unknown identifier '" + id + "'");
        }
        if (!eat('(')) fail("expected '(' after " + id);
        int arg = parse_expr();
        if (!eat(')')) fail("expected ')'");
        Node n;
        n.op = Op::Call;
        n.fn = fn;
        n.lhs = arg;
        return add(n);
      }
      fail(std::string("unexpected '") + c + "'");
    }
    static Fn lookup(const std::string& id) {
      if (id == "sin") return [](double v) { return std::sin(v); };
      if (id == "cos") return [](double v) { return std::cos(v); };
      if (id == "tan") return [](double v) { return std::tan(v); };
      if (id == "exp") return [](double v) { return std::exp(v); };
      if (id == "log") return [](double v) { return std::log(v); };
      if (id == "sqrt") return [](double v) { return std::sqrt(v); };
      if (id == "abs") return [](double v) { return std::abs(v); };
      if (id == "tanh") return [](double v) { return std::tanh(v); };
      return nullptr;
    }
  };

  double eval(int i, double t, double x, double a) const {
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::Num: return n.value;
      case Op::Var: return n.var == 't' ? t : n.var == 'x' ? x : a;
      case Op::Neg: return -eval(n.lhs, t, x, a);
      case Op::Add: return eval(n.lhs, t, x, a) + eval(n.rhs, t, x, a);
      case Op::Sub: return eval(n.lhs, t, x, a) - eval(n.rhs, t, x, a);
      case Op::Mul: return eval(n.lhs, t, x, a) * eval(n.rhs, t, x, a);
      case Op::Div: return eval(n.lhs, t, x, a) / eval(n.rhs, t, x, a);
      case Op::Pow: return std::pow(eval(n.lhs, t, x, a), eval(n.rhs, t, x, a));
      case Op::Call: return n.fn(eval(n.lhs, t, x, a));
    }
    return 0.0;
  }

  std::string text_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// One-dimensional problem x' = drift(t,x) + gain(t,x) a with cost
//   ell = control_cost(t,a,x) + running_cost(t,x) + theta1 (rho * mu)(x),
//   g   = terminal_cost(x) + theta2 (rho * mu)(x),
// and initial density proportional to initial_density(x) on [lo, hi].
struct Expr1DSpec {
  std::string drift = "0";
  std::string gain = "1";
  std::string control_cost = "0.5*a^2";
  std::string running_cost = "0";
  std::string terminal_cost = "0";
  std::string initial_density = "1";
  double support_lo = -1.0;
  double support_hi = 1.0;
  double horizon = 1.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double sigma = 0.03;

  bool operator==(const Expr1DSpec&) const = default;
};

namespace detail {

// Adds two batched fields; either may be empty.
inline FieldFn<1> sum_fields(FieldFn<1> f, FieldFn<1> g) {
  if (!f) return g;
  if (!g) return f;
  return [f, g](double t, const DiscreteMeasure<1>& mu, std::span<const Vec<1>> xs) {
    std::vector<double> a = f(t, mu, xs);
    const std::vector<double> b = g(t, mu, xs);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
  };
}

inline FieldFn<1> local_field(const Expr& e) {
  if (e.text().empty()) return {};
  return [e](double t, const DiscreteMeasure<1>&, std::span<const Vec<1>> xs) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = e(t, xs[i][0]);
    return out;
  };
}

}  // namespace detail

inline ProblemSpec<1, 1> expr_problem(const Expr1DSpec& s) {
  if (!(s.support_hi > s.support_lo)) throw ConfigError("support: need lo < hi");
  if (!(s.horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(s.sigma > 0.0)) throw ConfigError("sigma must be positive");
  const Expr drift(s.drift), gain(s.gain), ell0(s.control_cost);
  const Expr run(s.running_cost), term(s.terminal_cost), dens(s.initial_density);
  if (drift.uses('a') || gain.uses('a') || run.uses('a') || term.uses('a') ||
      dens.uses('a')) {
    throw ConfigError("only control_cost may depend on the control 'a'");
  }
  if (dens.uses('t') || term.uses('t')) {
    throw ConfigError("initial_density and terminal_cost cannot depend on 't'");
  }

  ProblemSpec<1, 1> p;
  p.name = "expr1d";
  p.horizon = s.horizon;
  p.dynamics.A1 = [drift](double t, const Vec<1>& x) { return Vec<1>{drift(t, x[0])}; };
  p.dynamics.B1 = [gain](double t, const Vec<1>& x) { return Mat<1>{gain(t, x[0])}; };
  p.cost.ell0 = [ell0](double t, const Vec<1>& a, const Vec<1>& x) {
    return ell0(t, x[0], a[0]);
  };

  FieldFn<1> f = s.running_cost == "0" ? FieldFn<1>{} : detail::local_field(run);
  FieldFn<1> g = s.terminal_cost == "0" ? FieldFn<1>{} : detail::local_field(term);
  if (s.theta1 != 0.0) {
    f = detail::sum_fields(f, gaussian_coupling_field<1>(s.theta1, s.sigma, 0));
  }
  if (s.theta2 != 0.0) {
    g = detail::sum_fields(g, gaussian_coupling_field<1>(s.theta2, s.sigma, 0));
  }
  p.cost.coupling_f = f;
  p.cost.terminal_g = g;

  const double lo = s.support_lo, hi = s.support_hi;
  const double mass = quad::integrate_box<1>(
      [&](const Vec<1>& x) { return dens(0.0, x[0]); }, {lo}, {hi}, 4000);
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw ConfigError("initial_density must have positive finite mass on the support");
  }
  p.m0.support_box = {{lo}, {hi}};
  p.m0.density = [dens, lo, hi, mass](const Vec<1>& x) {
    if (x[0] < lo || x[0] > hi) return 0.0;
    return dens(0.0, x[0]) / mass;
  };
  return p;
}

}  // namespace slmfg
