#pragma once

// Abstract syntax of the modelling language, plus the structural helpers the
// rest of the toolchain relies on: free variables, capture-free substitution,
// and alpha-aware structural equality.
//
// Variables come in six runtime kinds. A program variable (Param) is an
// ordinary mutable cell; the remaining kinds are the bookkeeping cells that
// sampling and conditioning maintain: the value cell of a random-variable
// name, the accumulated likelihood, and the per-name prior density, drawn
// value, and draw counter.

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "spge/ops.hpp"

namespace spge {

// A random-variable name: a string tag plus a bounded integer index.
struct Name {
  std::string str;
  int index = 0;

  friend bool operator==(const Name& a, const Name& b) {
    return a.index == b.index && a.str == b.str;
  }
  friend bool operator<(const Name& a, const Name& b) {
    return std::tie(a.str, a.index) < std::tie(b.str, b.index);
  }
};

enum class VarKind : std::uint8_t { Param, NameVal, Like, Pr, Val, Cnt };

struct Var {
  VarKind kind = VarKind::Param;
  std::string id;  // Param: variable name. Name-derived kinds: the name's string tag.
  int index = 0;   // Name-derived kinds: the name's index.

  static Var param(std::string name) { return Var{VarKind::Param, std::move(name), 0}; }
  static Var name_val(const Name& n) { return Var{VarKind::NameVal, n.str, n.index}; }
  static Var like() { return Var{VarKind::Like, {}, 0}; }
  static Var pr(const Name& n) { return Var{VarKind::Pr, n.str, n.index}; }
  static Var val(const Name& n) { return Var{VarKind::Val, n.str, n.index}; }
  static Var cnt(const Name& n) { return Var{VarKind::Cnt, n.str, n.index}; }

  // Lambda binders are Params with a reserved '$' prefix; they are always
  // substituted or bound before a variable reaches the store.
  bool is_binder() const { return kind == VarKind::Param && !id.empty() && id[0] == '$'; }

  friend bool operator==(const Var& a, const Var& b) {
    return a.kind == b.kind && a.index == b.index && a.id == b.id;
  }
  friend bool operator<(const Var& a, const Var& b) {
    return std::tie(a.kind, a.id, a.index) < std::tie(b.kind, b.id, b.index);
  }
};

// Renders a variable for reports and error messages.
inline std::string to_string(const Var& v) {
  switch (v.kind) {
    case VarKind::Param: return v.id;
    case VarKind::NameVal: return "(" + v.id + "," + std::to_string(v.index) + ")";
    case VarKind::Like: return "like";
    case VarKind::Pr: return "pr(" + v.id + "," + std::to_string(v.index) + ")";
    case VarKind::Val: return "val(" + v.id + "," + std::to_string(v.index) + ")";
    case VarKind::Cnt: return "cnt(" + v.id + "," + std::to_string(v.index) + ")";
  }
  return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind : std::uint8_t { Const, Ref, Call };
  Kind kind = Kind::Const;
  double value = 0.0;           // Const
  Var ref;                      // Ref
  const OpInfo* op = nullptr;   // Call
  std::vector<ExprPtr> args;    // Call
};

inline ExprPtr mk_const(double v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Const;
  e->value = v;
  return e;
}

inline ExprPtr mk_ref(Var v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Ref;
  e->ref = std::move(v);
  return e;
}

inline ExprPtr mk_call(Op op, std::vector<ExprPtr> args) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Call;
  e->op = &op_info(op);
  e->args = std::move(args);
  return e;
}

struct BoolExpr;
using BoolPtr = std::shared_ptr<const BoolExpr>;

struct BoolExpr {
  enum class Kind : std::uint8_t { True, Less, And, Not };
  Kind kind = Kind::True;
  ExprPtr lhs, rhs;  // Less
  BoolPtr a, b;      // And (a, b), Not (a)
};

inline BoolPtr mk_true() { return std::make_shared<BoolExpr>(); }

inline BoolPtr mk_less(ExprPtr l, ExprPtr r) {
  auto e = std::make_shared<BoolExpr>();
  e->kind = BoolExpr::Kind::Less;
  e->lhs = std::move(l);
  e->rhs = std::move(r);
  return e;
}

inline BoolPtr mk_and(BoolPtr a, BoolPtr b) {
  auto e = std::make_shared<BoolExpr>();
  e->kind = BoolExpr::Kind::And;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

inline BoolPtr mk_not(BoolPtr a) {
  auto e = std::make_shared<BoolExpr>();
  e->kind = BoolExpr::Kind::Not;
  e->a = std::move(a);
  return e;
}

// The name constructor of a sampling statement: a literal string tag plus an
// index expression (evaluated, floored, and clamped at run time).
struct NameExpr {
  std::string str;
  ExprPtr index;
};

// A normal distribution given by mean and variance expressions.
struct DistExpr {
  ExprPtr mean;
  ExprPtr variance;
};

// A one-argument reparameterisation map applied to the raw draw.
struct Lambda {
  Var binder;
  ExprPtr body;
};

struct Command;
using CmdPtr = std::shared_ptr<const Command>;

struct Command {
  enum class Kind : std::uint8_t { Skip, Assign, Seq, If, While, Sample, Observe };
  Kind kind = Kind::Skip;

  Var target;          // Assign, Sample
  ExprPtr expr;        // Assign
  CmdPtr first;        // Seq: left.  If: then.  While: body.
  CmdPtr second;       // Seq: right. If: else.
  BoolPtr cond;        // If, While
  NameExpr name;       // Sample
  DistExpr dist;       // Sample, Observe
  Lambda lam;          // Sample
  double observed = 0; // Observe
};

inline CmdPtr mk_skip() { return std::make_shared<Command>(); }

inline CmdPtr mk_assign(Var x, ExprPtr e) {
  auto c = std::make_shared<Command>();
  c->kind = Command::Kind::Assign;
  c->target = std::move(x);
  c->expr = std::move(e);
  return c;
}

inline CmdPtr mk_seq(CmdPtr a, CmdPtr b) {
  auto c = std::make_shared<Command>();
  c->kind = Command::Kind::Seq;
  c->first = std::move(a);
  c->second = std::move(b);
  return c;
}

inline CmdPtr mk_if(BoolPtr cond, CmdPtr then_branch, CmdPtr else_branch) {
  auto c = std::make_shared<Command>();
  c->kind = Command::Kind::If;
  c->cond = std::move(cond);
  c->first = std::move(then_branch);
  c->second = std::move(else_branch);
  return c;
}

inline CmdPtr mk_while(BoolPtr cond, CmdPtr body) {
  auto c = std::make_shared<Command>();
  c->kind = Command::Kind::While;
  c->cond = std::move(cond);
  c->first = std::move(body);
  return c;
}

inline CmdPtr mk_sample(Var x, NameExpr name, DistExpr dist, Lambda lam) {
  auto c = std::make_shared<Command>();
  c->kind = Command::Kind::Sample;
  c->target = std::move(x);
  c->name = std::move(name);
  c->dist = std::move(dist);
  c->lam = std::move(lam);
  return c;
}

inline CmdPtr mk_observe(DistExpr dist, double value) {
  auto c = std::make_shared<Command>();
  c->kind = Command::Kind::Observe;
  c->dist = std::move(dist);
  c->observed = value;
  return c;
}

// ---------------------------------------------------------------------------
// Free variables
// ---------------------------------------------------------------------------

template <class F>
void for_each_free_var(const Expr& e, const F& fn) {
  switch (e.kind) {
    case Expr::Kind::Const: return;
    case Expr::Kind::Ref: fn(e.ref); return;
    case Expr::Kind::Call:
      for (const ExprPtr& a : e.args) for_each_free_var(*a, fn);
      return;
  }
}

template <class F>
void for_each_free_var(const BoolExpr& b, const F& fn) {
  switch (b.kind) {
    case BoolExpr::Kind::True: return;
    case BoolExpr::Kind::Less:
      for_each_free_var(*b.lhs, fn);
      for_each_free_var(*b.rhs, fn);
      return;
    case BoolExpr::Kind::And:
      for_each_free_var(*b.a, fn);
      for_each_free_var(*b.b, fn);
      return;
    case BoolExpr::Kind::Not: for_each_free_var(*b.a, fn); return;
  }
}

inline std::set<Var> free_vars(const Expr& e) {
  std::set<Var> out;
  for_each_free_var(e, [&](const Var& v) { out.insert(v); });
  return out;
}

inline std::set<Var> free_vars(const BoolExpr& b) {
  std::set<Var> out;
  for_each_free_var(b, [&](const Var& v) { out.insert(v); });
  return out;
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

// e[replacement / x]. Binders are globally unique by construction, so the
// replacement cannot be captured and one pass suffices.
inline ExprPtr subst(const ExprPtr& e, const Var& x, const ExprPtr& replacement) {
  switch (e->kind) {
    case Expr::Kind::Const: return e;
    case Expr::Kind::Ref: return e->ref == x ? replacement : e;
    case Expr::Kind::Call: {
      bool changed = false;
      std::vector<ExprPtr> args;
      args.reserve(e->args.size());
      for (const ExprPtr& a : e->args) {
        args.push_back(subst(a, x, replacement));
        changed |= args.back() != a;
      }
      if (!changed) return e;
      auto out = std::make_shared<Expr>(*e);
      out->args = std::move(args);
      return out;
    }
  }
  return e;
}

// The body of `lam` with `argument` substituted for the binder.
inline ExprPtr apply_lambda(const Lambda& lam, const ExprPtr& argument) {
  return subst(lam.body, lam.binder, argument);
}

inline bool is_identity_lambda(const Lambda& lam) {
  return lam.body->kind == Expr::Kind::Ref && lam.body->ref == lam.binder;
}

// ---------------------------------------------------------------------------
// Alpha-aware structural equality
// ---------------------------------------------------------------------------

namespace detail {

struct BinderPair {
  Var left, right;
};

inline bool equal_var(const Var& a, const Var& b, const std::vector<BinderPair>& env) {
  for (auto it = env.rbegin(); it != env.rend(); ++it) {
    if (a == it->left || b == it->right) return a == it->left && b == it->right;
  }
  return a == b;
}

inline bool equal_expr(const Expr& a, const Expr& b, const std::vector<BinderPair>& env) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Expr::Kind::Const: {
      // Bitwise comparison keeps distinct zero signs and NaNs honest.
      std::uint64_t ba, bb;
      std::memcpy(&ba, &a.value, 8);
      std::memcpy(&bb, &b.value, 8);
      return ba == bb;
    }
    case Expr::Kind::Ref: return equal_var(a.ref, b.ref, env);
    case Expr::Kind::Call: {
      if (a.op != b.op || a.args.size() != b.args.size()) return false;
      for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (!equal_expr(*a.args[i], *b.args[i], env)) return false;
      }
      return true;
    }
  }
  return false;
}

inline bool equal_bool(const BoolExpr& a, const BoolExpr& b, const std::vector<BinderPair>& env) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case BoolExpr::Kind::True: return true;
    case BoolExpr::Kind::Less:
      return equal_expr(*a.lhs, *b.lhs, env) && equal_expr(*a.rhs, *b.rhs, env);
    case BoolExpr::Kind::And:
      return equal_bool(*a.a, *b.a, env) && equal_bool(*a.b, *b.b, env);
    case BoolExpr::Kind::Not: return equal_bool(*a.a, *b.a, env);
  }
  return false;
}

inline bool equal_cmd(const Command& a, const Command& b, std::vector<BinderPair>& env) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Command::Kind::Skip: return true;
    case Command::Kind::Assign:
      return equal_var(a.target, b.target, env) && equal_expr(*a.expr, *b.expr, env);
    case Command::Kind::Seq:
      return equal_cmd(*a.first, *b.first, env) && equal_cmd(*a.second, *b.second, env);
    case Command::Kind::If:
      return equal_bool(*a.cond, *b.cond, env) && equal_cmd(*a.first, *b.first, env) &&
             equal_cmd(*a.second, *b.second, env);
    case Command::Kind::While:
      return equal_bool(*a.cond, *b.cond, env) && equal_cmd(*a.first, *b.first, env);
    case Command::Kind::Sample: {
      if (!equal_var(a.target, b.target, env)) return false;
      if (a.name.str != b.name.str || !equal_expr(*a.name.index, *b.name.index, env)) return false;
      if (!equal_expr(*a.dist.mean, *b.dist.mean, env) ||
          !equal_expr(*a.dist.variance, *b.dist.variance, env)) {
        return false;
      }
      env.push_back({a.lam.binder, b.lam.binder});
      const bool ok = equal_expr(*a.lam.body, *b.lam.body, env);
      env.pop_back();
      return ok;
    }
    case Command::Kind::Observe: {
      std::uint64_t ba, bb;
      std::memcpy(&ba, &a.observed, 8);
      std::memcpy(&bb, &b.observed, 8);
      return ba == bb && equal_expr(*a.dist.mean, *b.dist.mean, env) &&
             equal_expr(*a.dist.variance, *b.dist.variance, env);
    }
  }
  return false;
}

}  // namespace detail

inline bool equal(const Expr& a, const Expr& b) {
  std::vector<detail::BinderPair> env;
  return detail::equal_expr(a, b, env);
}

inline bool equal(const BoolExpr& a, const BoolExpr& b) {
  std::vector<detail::BinderPair> env;
  return detail::equal_bool(a, b, env);
}

inline bool equal(const Command& a, const Command& b) {
  std::vector<detail::BinderPair> env;
  return detail::equal_cmd(a, b, env);
}

// ---------------------------------------------------------------------------
// Traversal helpers
// ---------------------------------------------------------------------------

template <class F>
void for_each_command(const CmdPtr& c, const F& fn) {
  fn(c);
  switch (c->kind) {
    case Command::Kind::Seq:
    case Command::Kind::If:
      for_each_command(c->first, fn);
      for_each_command(c->second, fn);
      return;
    case Command::Kind::While: for_each_command(c->first, fn); return;
    default: return;
  }
}

inline bool contains_observe(const CmdPtr& c) {
  bool found = false;
  for_each_command(c, [&](const CmdPtr& n) { found |= n->kind == Command::Kind::Observe; });
  return found;
}

inline bool all_lambdas_identity(const CmdPtr& c) {
  bool ok = true;
  for_each_command(c, [&](const CmdPtr& n) {
    if (n->kind == Command::Kind::Sample) ok &= is_identity_lambda(n->lam);
  });
  return ok;
}

}  // namespace spge
