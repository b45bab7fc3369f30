#pragma once

// Pretty-printer, the inverse of parse.hpp: for well-formed ASTs,
// parse_command(pretty(c)) is structurally equal to c (up to binder renaming,
// which structural equality ignores). Doubles print in shortest
// round-trippable form.

#include <charconv>
#include <string>

#include "spge/ast.hpp"
#include "spge/parse.hpp"

namespace spge {

inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

struct BinderName {
  const Var* var = nullptr;
  std::string surface;
};

inline bool identifier_shaped(const std::string& s) {
  if (s.empty() || !is_ident_start(static_cast<unsigned char>(s[0]))) return false;
  for (const char ch : s) {
    if (!is_ident_char(static_cast<unsigned char>(ch))) return false;
  }
  for (const char* kw : {"skip", "if", "else", "while", "true", "false", "sam", "obs", "name", "lam", "N"}) {
    if (s == kw) return false;
  }
  return true;
}

// Precedence levels: 0 additive, 1 multiplicative, 2 unary minus.
inline void print_expr(std::string& out, const Expr& e, int min_prec, const BinderName& binder) {
  switch (e.kind) {
    case Expr::Kind::Const: {
      if (e.value < 0 || (e.value == 0 && std::signbit(e.value))) {
        // A negative literal needs the same care as unary minus.
        if (min_prec > 2) out += '(';
        out += fmt_double(e.value);
        if (min_prec > 2) out += ')';
      } else {
        out += fmt_double(e.value);
      }
      return;
    }
    case Expr::Kind::Ref:
      if (binder.var != nullptr && e.ref == *binder.var) out += binder.surface;
      else out += e.ref.id;  // only Param refs are printable surface syntax
      return;
    case Expr::Kind::Call: break;
  }
  const Op op = e.op->op;
  auto infix = [&](const char* sym, int prec) {
    if (min_prec > prec) out += '(';
    print_expr(out, *e.args[0], prec, binder);
    out += ' ';
    out += sym;
    out += ' ';
    print_expr(out, *e.args[1], prec + 1, binder);
    if (min_prec > prec) out += ')';
  };
  switch (op) {
    case Op::Add: infix("+", 0); return;
    case Op::Sub: infix("-", 0); return;
    case Op::Mul: infix("*", 1); return;
    case Op::Div: infix("/", 1); return;
    case Op::Neg:
      if (min_prec > 2) out += '(';
      out += '-';
      if (e.args[0]->kind == Expr::Kind::Const) {
        // '-3' would re-parse as a negative literal; keep the Neg node.
        out += '(';
        print_expr(out, *e.args[0], 0, binder);
        out += ')';
      } else {
        print_expr(out, *e.args[0], 2, binder);
      }
      if (min_prec > 2) out += ')';
      return;
    default: {
      out += e.op->name;
      out += '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        print_expr(out, *e.args[i], 0, binder);
      }
      out += ')';
      return;
    }
  }
}

inline void print_bool(std::string& out, const BoolExpr& b, int min_prec, const BinderName& binder) {
  switch (b.kind) {
    case BoolExpr::Kind::True: out += "true"; return;
    case BoolExpr::Kind::Less:
      print_expr(out, *b.lhs, 0, binder);
      out += " < ";
      print_expr(out, *b.rhs, 0, binder);
      return;
    case BoolExpr::Kind::And:
      if (min_prec > 0) out += '(';
      print_bool(out, *b.a, 0, binder);
      out += " && ";
      print_bool(out, *b.b, 1, binder);
      if (min_prec > 0) out += ')';
      return;
    case BoolExpr::Kind::Not:
      if (b.a->kind == BoolExpr::Kind::True) {
        out += "false";
        return;
      }
      out += '!';
      if (b.a->kind == BoolExpr::Kind::Not) {
        print_bool(out, *b.a, 0, binder);
      } else {
        out += '(';
        print_bool(out, *b.a, 0, binder);
        out += ')';
      }
      return;
  }
}

inline void print_dist(std::string& out, const DistExpr& d, const BinderName& binder) {
  out += "N(";
  print_expr(out, *d.mean, 0, binder);
  out += ", ";
  print_expr(out, *d.variance, 0, binder);
  out += ')';
}

inline std::string choose_binder_surface(const Lambda& lam) {
  std::string candidate = "y";
  for (int k = 0;; ++k) {
    if (k > 0) candidate = "y" + std::to_string(k - 1);
    bool clashes = false;
    for_each_free_var(*lam.body, [&](const Var& v) {
      if (v.kind == VarKind::Param && !(v == lam.binder) && v.id == candidate) clashes = true;
    });
    if (!clashes) return candidate;
  }
}

inline void print_cmd(std::string& out, const Command& c, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const BinderName no_binder;
  switch (c.kind) {
    case Command::Kind::Skip: out += pad + "skip"; return;
    case Command::Kind::Assign:
      out += pad + c.target.id + " := ";
      print_expr(out, *c.expr, 0, no_binder);
      return;
    case Command::Kind::Seq:
      print_cmd(out, *c.first, indent);
      out += ";\n";
      print_cmd(out, *c.second, indent);
      return;
    case Command::Kind::If:
      out += pad + "if ";
      print_bool(out, *c.cond, 0, no_binder);
      out += " {\n";
      print_cmd(out, *c.first, indent + 1);
      out += "\n" + pad + "} else {\n";
      print_cmd(out, *c.second, indent + 1);
      out += "\n" + pad + "}";
      return;
    case Command::Kind::While:
      out += pad + "while ";
      print_bool(out, *c.cond, 0, no_binder);
      out += " {\n";
      print_cmd(out, *c.first, indent + 1);
      out += "\n" + pad + "}";
      return;
    case Command::Kind::Sample: {
      out += pad + c.target.id + " := sam(";
      const bool zero_index =
          c.name.index->kind == Expr::Kind::Const && c.name.index->value == 0.0;
      if (zero_index && identifier_shaped(c.name.str)) {
        out += c.name.str;
      } else {
        out += "name(";
        out += identifier_shaped(c.name.str) ? c.name.str : '"' + c.name.str + '"';
        out += ", ";
        print_expr(out, *c.name.index, 0, no_binder);
        out += ')';
      }
      out += ", ";
      BinderName binder{&c.lam.binder, choose_binder_surface(c.lam)};
      print_dist(out, c.dist, no_binder);
      out += ", lam " + binder.surface + ". ";
      print_expr(out, *c.lam.body, 0, binder);
      out += ')';
      return;
    }
    case Command::Kind::Observe:
      out += pad + "obs(";
      print_dist(out, c.dist, no_binder);
      out += ", " + fmt_double(c.observed) + ')';
      return;
  }
}

}  // namespace detail

inline std::string pretty(const Command& c) {
  std::string out;
  detail::print_cmd(out, c, 0);
  return out;
}

inline std::string pretty(const Expr& e) {
  std::string out;
  detail::print_expr(out, e, 0, detail::BinderName{});
  return out;
}

inline std::string pretty(const BoolExpr& b) {
  std::string out;
  detail::print_bool(out, b, 0, detail::BinderName{});
  return out;
}

// A program file: header (when parameters are declared) plus the command.
inline std::string pretty(const Program& p) {
  std::string out;
  if (!p.params.empty()) {
    out += "#params:";
    for (std::size_t i = 0; i < p.params.size(); ++i) out += (i ? ", " : " ") + p.params[i];
    out += '\n';
  }
  out += pretty(*p.body);
  out += '\n';
  return out;
}

}  // namespace spge
