#pragma once

// Parametric smoothness analysis. For a command c and a store variable v the
// analysis returns a triple (p, d, V):
//
//   p(v)  variables w such that the map "initial value of w -> final value
//         of v" is smooth (for the chosen property) along every slice;
//   d(v)  variables the final value of v may depend on: two initial stores
//         agreeing on d(v) yield the same final value of v;
//   V     variables that may influence control flow, hence termination: two
//         initial stores agreeing on V either both terminate or both do not.
//
// Smoothness is parametric in the property (differentiable or Lipschitz) via
// the per-argument operator table. A range pre-analysis (intervals.hpp)
// upgrades guarded argument positions (division, log, sqrt, variance) to
// smooth where the argument provably stays on the safe side.
//
// Well-formedness, checked on every result: p(v) contains everything v does
// not depend on, and every d(v) contains V.

#include <stdexcept>
#include <vector>

#include "spge/ast.hpp"
#include "spge/intervals.hpp"
#include "spge/universe.hpp"

namespace spge {

enum class Property { Differentiable, Lipschitz };

inline const char* to_string(Property p) {
  return p == Property::Differentiable ? "differentiable" : "lipschitz";
}

struct AbsTriple {
  std::vector<VarSet> p;
  std::vector<VarSet> d;
  VarSet V;

  friend bool operator==(const AbsTriple& a, const AbsTriple& b) {
    return a.p == b.p && a.d == b.d && a.V == b.V;
  }
};

// The identity element: every slice smooth, every variable depending only on
// itself, termination influenced by nothing.
inline AbsTriple identity_triple(std::size_t n) {
  AbsTriple t;
  t.p.assign(n, VarSet::full(n));
  t.d.assign(n, VarSet(n));
  for (std::size_t v = 0; v < n; ++v) t.d[v].set(v);
  t.V = VarSet(n);
  return t;
}

inline bool well_formed(const AbsTriple& t) {
  for (std::size_t v = 0; v < t.p.size(); ++v) {
    if (!(~t.d[v]).subset_of(t.p[v])) return false;
    if (!t.V.subset_of(t.d[v])) return false;
  }
  return true;
}

// The abstract order: smaller means more precise (larger smooth sets,
// smaller dependence sets, smaller control set).
inline bool triple_leq(const AbsTriple& a, const AbsTriple& b) {
  if (!a.V.subset_of(b.V)) return false;
  for (std::size_t v = 0; v < a.p.size(); ++v) {
    if (!b.p[v].subset_of(a.p[v])) return false;
    if (!a.d[v].subset_of(b.d[v])) return false;
  }
  return true;
}

// Smooth set of an expression: variables along which the expression's value
// moves smoothly. Opaque argument positions block their whole subtree;
// guarded positions are smooth only with a range proof (env may be null).
inline VarSet expr_smooth(const Expr& e, const Universe& u, Property prop,
                          const IntervalEnv* env) {
  if (e.kind != Expr::Kind::Call) return VarSet::full(u.size());
  VarSet acc = VarSet::full(u.size());
  for (std::size_t i = 0; i < e.args.size(); ++i) {
    const Expr& arg = *e.args[i];
    const ArgSmooth cls = prop == Property::Differentiable
                              ? e.op->differentiable[i]
                              : e.op->lipschitz[i];
    bool smooth_here = false;
    switch (cls) {
      case ArgSmooth::Smooth: smooth_here = true; break;
      case ArgSmooth::NeedsPositive:
        smooth_here = env != nullptr && eval_interval(arg, u, *env).provably_positive();
        break;
      case ArgSmooth::NeedsNonzero:
        smooth_here = env != nullptr && eval_interval(arg, u, *env).provably_nonzero();
        break;
      case ArgSmooth::Opaque: smooth_here = false; break;
    }
    if (smooth_here) {
      acc &= expr_smooth(arg, u, prop, env);
    } else {
      acc &= ~fv_set(arg, u);
    }
  }
  return acc;
}

namespace detail {

// f_/\ lifting: intersection of f over S, the full set when S is empty.
inline VarSet lift_inter(const std::vector<VarSet>& f, const VarSet& s, std::size_t n) {
  VarSet out = VarSet::full(n);
  s.for_each([&](std::size_t v) { out &= f[v]; });
  return out;
}

// f_\/ lifting: union of f over S, empty when S is empty.
inline VarSet lift_union(const std::vector<VarSet>& f, const VarSet& s, std::size_t n) {
  VarSet out(n);
  s.for_each([&](std::size_t v) { out |= f[v]; });
  return out;
}

inline AbsTriple seq_compose(const AbsTriple& a, const AbsTriple& b, std::size_t n) {
  AbsTriple out;
  out.p.resize(n);
  out.d.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    out.p[v] = ~(a.V | ~lift_inter(a.p, b.d[v], n) | lift_union(a.d, ~b.p[v], n));
    out.d[v] = a.V | lift_union(a.d, b.d[v], n);
  }
  out.V = a.V | lift_union(a.d, b.V, n);
  return out;
}

class AbstractRunner {
 public:
  AbstractRunner(const Universe& u, Property prop, const IntervalAnalysis* iv)
      : u_(u), prop_(prop), iv_(iv), n_(u.size()) {}

  AbsTriple run(const CmdPtr& c) {
    switch (c->kind) {
      case Command::Kind::Skip: return identity_triple(n_);
      case Command::Kind::Assign: {
        AbsTriple t = identity_triple(n_);
        const std::size_t x = u_.index(c->target);
        t.p[x] = expr_smooth(*c->expr, u_, prop_, env_at(c));
        t.d[x] = fv_set(*c->expr, u_);
        return t;
      }
      case Command::Kind::Seq:
        return seq_compose(run(c->first), run(c->second), n_);
      case Command::Kind::If: {
        const VarSet fvb = fv_set(*c->cond, u_);
        const AbsTriple a = run(c->first);
        const AbsTriple b = run(c->second);
        AbsTriple out;
        out.p.resize(n_);
        out.d.resize(n_);
        for (std::size_t v = 0; v < n_; ++v) {
          out.p[v] = ~fvb & a.p[v] & b.p[v];
          out.d[v] = fvb | a.d[v] | b.d[v];
        }
        out.V = fvb | a.V | b.V;
        return out;
      }
      case Command::Kind::While: {
        const VarSet fvb = fv_set(*c->cond, u_);
        const AbsTriple a = run(c->first);
        // Kleene iteration from the least element.
        AbsTriple x;
        x.p.assign(n_, VarSet::full(n_));
        x.d.assign(n_, VarSet(n_));
        x.V = VarSet(n_);
        for (;;) {
          AbsTriple next;
          next.p.resize(n_);
          next.d.resize(n_);
          for (std::size_t v = 0; v < n_; ++v) {
            next.p[v] = ~fvb &
                        ~(a.V | ~lift_inter(a.p, x.d[v], n_) | lift_union(a.d, ~x.p[v], n_));
            next.d[v] = fvb | a.V | lift_union(a.d, x.d[v], n_);
            next.d[v].set(v);
          }
          next.V = fvb | a.V | lift_union(a.d, x.V, n_);
          if (next == x) return x;
          x = std::move(next);
        }
      }
      case Command::Kind::Sample:
        return c->name.index->kind == Expr::Kind::Const ? sample_strong(c) : sample_weak(c);
      case Command::Kind::Observe: {
        AbsTriple t = identity_triple(n_);
        const ExprPtr score = mk_call(
            Op::Mul, {mk_ref(Var::like()),
                      mk_call(Op::NormalPdf, {mk_const(c->observed), c->dist.mean,
                                              c->dist.variance})});
        const std::size_t like = u_.index_like();
        t.p[like] = expr_smooth(*score, u_, prop_, env_at(c));
        t.d[like] = fv_set(*score, u_);
        return t;
      }
    }
    throw std::logic_error("abstract run: bad command kind");
  }

 private:
  const IntervalEnv* env_at(const CmdPtr& c) const {
    return iv_ == nullptr ? nullptr : iv_->at(c.get());
  }

  ExprPtr prior_score(const CmdPtr& c, const Name& mu) const {
    return mk_call(Op::NormalPdf,
                   {mk_ref(Var::name_val(mu)), c->dist.mean, c->dist.variance});
  }

  AbsTriple sample_strong(const CmdPtr& c) {
    const Name mu = create_name(c->name.str, c->name.index->value, u_.name_bound());
    const IntervalEnv* env = env_at(c);
    AbsTriple t = identity_triple(n_);

    const ExprPtr body = apply_lambda(c->lam, mk_ref(Var::name_val(mu)));
    const VarSet body_smooth = expr_smooth(*body, u_, prop_, env);
    const VarSet body_fv = fv_set(*body, u_);
    const std::size_t x = u_.index(c->target);
    const std::size_t val = u_.index_val(mu);
    t.p[x] = body_smooth;
    t.d[x] = body_fv;
    t.p[val] = body_smooth;
    t.d[val] = body_fv;

    const ExprPtr score = prior_score(c, mu);
    const std::size_t pr = u_.index_pr(mu);
    t.p[pr] = expr_smooth(*score, u_, prop_, env);
    t.d[pr] = fv_set(*score, u_);
    // The draw counter row stays the identity: its bump is smooth everywhere.
    return t;
  }

  AbsTriple sample_weak(const CmdPtr& c) {
    const IntervalEnv* env = env_at(c);
    const VarSet fve = fv_set(*c->name.index, u_);
    AbsTriple t = identity_triple(n_);

    VarSet x_smooth = VarSet::full(n_);
    VarSet x_fv = fve;
    for (int i = 0; i < u_.name_bound(); ++i) {
      const Name mu{c->name.str, i};
      const ExprPtr body = apply_lambda(c->lam, mk_ref(Var::name_val(mu)));
      const VarSet body_smooth = expr_smooth(*body, u_, prop_, env);
      const VarSet body_fv = fv_set(*body, u_);
      x_smooth &= body_smooth;
      x_fv |= body_fv;

      const std::size_t val = u_.index_val(mu);
      t.p[val] = ~fve & body_smooth;
      t.d[val] = fve | body_fv;
      t.d[val].set(val);

      const ExprPtr score = prior_score(c, mu);
      const std::size_t pr = u_.index_pr(mu);
      t.p[pr] = ~fve & expr_smooth(*score, u_, prop_, env);
      t.d[pr] = fve | fv_set(*score, u_);
      t.d[pr].set(pr);

      const std::size_t cnt = u_.index_cnt(mu);
      t.p[cnt] = ~fve;
      t.d[cnt] = fve;
      t.d[cnt].set(cnt);
    }
    const std::size_t x = u_.index(c->target);
    t.p[x] = ~fve & x_smooth;
    t.d[x] = x_fv;
    return t;
  }

  const Universe& u_;
  Property prop_;
  const IntervalAnalysis* iv_;
  std::size_t n_;
};

}  // namespace detail

// Analyses `c` over `u`. The result is always well-formed; a violation would
// be an internal error and throws.
inline AbsTriple abstract_exec(const CmdPtr& c, const Universe& u, Property prop,
                               bool with_intervals = true) {
  AbsTriple t;
  if (with_intervals) {
    const IntervalAnalysis iv = pre_analyze(c, u);
    t = detail::AbstractRunner(u, prop, &iv).run(c);
  } else {
    t = detail::AbstractRunner(u, prop, nullptr).run(c);
  }
  if (!well_formed(t)) throw std::logic_error("analysis produced an ill-formed triple");
  return t;
}

}  // namespace spge
