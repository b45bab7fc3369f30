#pragma once

// Forward interval analysis over program variables. Its only job is to prove
// range facts ("this variance is strictly positive", "this denominator avoids
// zero") that let the smoothness analysis keep guarded operators smooth
// instead of treating them as opaque.
//
// Every program variable starts unconstrained, so the facts hold from any
// initial store. Name cells and the bookkeeping cells are not tracked and
// read as unconstrained. Branches join, loops iterate with widening to
// infinity after a few rounds, so the analysis always terminates.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "spge/ast.hpp"
#include "spge/ops.hpp"
#include "spge/universe.hpp"

namespace spge {

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  static Interval top() { return {}; }
  static Interval point(double v) { return {v, v}; }

  bool is_top() const { return lo == -std::numeric_limits<double>::infinity() &&
                               hi == std::numeric_limits<double>::infinity(); }
  bool provably_positive() const { return lo > 0.0; }
  bool provably_nonzero() const { return lo > 0.0 || hi < 0.0; }

  friend bool operator==(const Interval& a, const Interval& b) {
    return a.lo == b.lo && a.hi == b.hi;
  }
};

inline Interval interval_join(const Interval& a, const Interval& b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

inline Interval interval_widen(const Interval& prev, const Interval& next) {
  Interval out = next;
  if (next.lo < prev.lo) out.lo = -std::numeric_limits<double>::infinity();
  if (next.hi > prev.hi) out.hi = std::numeric_limits<double>::infinity();
  return out;
}

namespace detail {

inline Interval guard_nan(Interval x) {
  if (std::isnan(x.lo) || std::isnan(x.hi) || x.lo > x.hi) return Interval::top();
  return x;
}

inline Interval interval_op(Op op, const Interval* a) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (op) {
    case Op::Add: return guard_nan({a[0].lo + a[1].lo, a[0].hi + a[1].hi});
    case Op::Sub: return guard_nan({a[0].lo - a[1].hi, a[0].hi - a[1].lo});
    case Op::Mul: {
      const double c[4] = {a[0].lo * a[1].lo, a[0].lo * a[1].hi, a[0].hi * a[1].lo,
                           a[0].hi * a[1].hi};
      Interval out{c[0], c[0]};
      for (double x : c) {
        if (std::isnan(x)) return Interval::top();  // 0 * inf
        out.lo = std::min(out.lo, x);
        out.hi = std::max(out.hi, x);
      }
      return out;
    }
    case Op::Div: {
      if (!a[1].provably_nonzero()) return Interval::top();
      const double c[4] = {a[0].lo / a[1].lo, a[0].lo / a[1].hi, a[0].hi / a[1].lo,
                           a[0].hi / a[1].hi};
      Interval out{c[0], c[0]};
      for (double x : c) {
        if (std::isnan(x)) return Interval::top();
        out.lo = std::min(out.lo, x);
        out.hi = std::max(out.hi, x);
      }
      return out;
    }
    case Op::Neg: return {-a[0].hi, -a[0].lo};
    case Op::Exp: return {a[0].lo > -inf ? std::exp(a[0].lo) : 0.0,
                          a[0].hi < inf ? std::exp(a[0].hi) : inf};
    case Op::Log:
      if (a[0].provably_positive()) {
        return {std::log(a[0].lo), a[0].hi < inf ? std::log(a[0].hi) : inf};
      }
      if (a[0].hi <= 0.0) return Interval::point(kLogFloor);
      return {kLogFloor, a[0].hi < inf ? std::log(a[0].hi) : inf};
    case Op::Sqrt:
      if (a[0].provably_positive()) {
        return {std::sqrt(a[0].lo), a[0].hi < inf ? std::sqrt(a[0].hi) : inf};
      }
      if (a[0].hi <= 0.0) return Interval::point(1.0);
      return {0.0, std::max(1.0, a[0].hi < inf ? std::sqrt(a[0].hi) : inf)};
    case Op::Relu: return {std::max(0.0, a[0].lo), std::max(0.0, a[0].hi)};
    case Op::NormalPdf: {
      if (a[2].provably_positive()) {
        return {0.0, kInvSqrt2Pi / std::sqrt(a[2].lo)};
      }
      if (a[2].hi <= 0.0) return {0.0, kInvSqrt2Pi};  // variance defaults to one
      return {0.0, inf};
    }
    case Op::Floor:
      return {a[0].lo > -inf ? std::floor(a[0].lo) : -inf,
              a[0].hi < inf ? std::floor(a[0].hi) : inf};
    case Op::Step:
      if (a[0].provably_positive()) return Interval::point(1.0);
      if (a[0].hi <= 0.0) return Interval::point(0.0);
      return {0.0, 1.0};
    case Op::Gxy: return {-0.5, 0.5};
  }
  return Interval::top();
}

}  // namespace detail

// One interval per universe parameter; everything else reads unconstrained.
using IntervalEnv = std::vector<Interval>;

inline Interval eval_interval(const Expr& e, const Universe& u, const IntervalEnv& env) {
  switch (e.kind) {
    case Expr::Kind::Const: return Interval::point(e.value);
    case Expr::Kind::Ref: {
      if (e.ref.kind != VarKind::Param || e.ref.is_binder()) return Interval::top();
      const std::size_t idx = u.index(e.ref) - (1 + 4 * u.name_count());
      return env[idx];
    }
    case Expr::Kind::Call: {
      Interval args[3];
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        args[i] = eval_interval(*e.args[i], u, env);
      }
      return detail::interval_op(e.op->op, args);
    }
  }
  return Interval::top();
}

// Range facts available just before each command node. When a node occurs
// more than once in the tree the recorded environment is the join over all
// occurrences.
struct IntervalAnalysis {
  std::map<const Command*, IntervalEnv> before;

  const IntervalEnv* at(const Command* c) const {
    const auto it = before.find(c);
    return it == before.end() ? nullptr : &it->second;
  }
};

namespace detail {

inline bool env_equal(const IntervalEnv& a, const IntervalEnv& b) {
  return a == b;
}

inline IntervalEnv env_join(const IntervalEnv& a, const IntervalEnv& b) {
  IntervalEnv out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = interval_join(a[i], b[i]);
  return out;
}

class IntervalRunner {
 public:
  IntervalRunner(const Universe& u, IntervalAnalysis* record) : u_(u), record_(record) {}

  IntervalEnv run(const CmdPtr& c, IntervalEnv env) {
    note(c.get(), env);
    switch (c->kind) {
      case Command::Kind::Skip: return env;
      case Command::Kind::Assign: {
        if (c->target.kind == VarKind::Param && !c->target.is_binder()) {
          env[param_slot(c->target)] = eval_interval(*c->expr, u_, env);
        }
        return env;
      }
      case Command::Kind::Seq: return run(c->second, run(c->first, env));
      case Command::Kind::If:
        return env_join(run(c->first, env), run(c->second, env));
      case Command::Kind::While: {
        IntervalEnv head = env;
        for (int round = 0;; ++round) {
          IntervalRunner silent(u_, nullptr);
          IntervalEnv next = env_join(head, silent.run(c->first, head));
          if (round >= 3) {
            for (std::size_t i = 0; i < next.size(); ++i) {
              next[i] = interval_widen(head[i], next[i]);
            }
          }
          if (env_equal(next, head)) break;
          head = std::move(next);
        }
        // One recording pass through the body under the stable invariant.
        run(c->first, head);
        return head;
      }
      case Command::Kind::Sample: {
        if (c->target.kind == VarKind::Param && !c->target.is_binder()) {
          // The raw draw is unbounded (binder references read as top), but
          // the mapping may still bound the stored value.
          env[param_slot(c->target)] = eval_interval(*c->lam.body, u_, env);
        }
        return env;
      }
      case Command::Kind::Observe: return env;
    }
    return env;
  }

 private:
  std::size_t param_slot(const Var& v) const { return u_.index(v) - (1 + 4 * u_.name_count()); }

  void note(const Command* c, const IntervalEnv& env) {
    if (record_ == nullptr) return;
    auto [it, fresh] = record_->before.emplace(c, env);
    if (!fresh) it->second = env_join(it->second, env);
  }

  const Universe& u_;
  IntervalAnalysis* record_;
};

}  // namespace detail

inline IntervalAnalysis pre_analyze(const CmdPtr& c, const Universe& u) {
  IntervalAnalysis out;
  detail::IntervalRunner runner(u, &out);
  runner.run(c, IntervalEnv(u.params().size()));
  return out;
}

// Ranges after the whole program, one per universe parameter.
inline IntervalEnv post_intervals(const CmdPtr& c, const Universe& u) {
  detail::IntervalRunner runner(u, nullptr);
  return runner.run(c, IntervalEnv(u.params().size()));
}

}  // namespace spge
