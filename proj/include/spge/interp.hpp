#pragma once

// Execution of commands over a concrete store. The evaluator is generic over
// the scalar type: plain doubles for ordinary runs, forward-mode duals for
// parameter gradients. Dual arithmetic routes every operator through the same
// value/partial tables as the double path, so derivatives agree with the
// documented defaults (zero slope inside a default region).
//
// Two execution modes exist:
//   exec           density semantics: name values are read from the store,
//                  each sample statement scores its name against the prior
//                  cell and bumps the draw counter;
//   exec_sampling  sampling semantics: each sample statement draws its raw
//                  value fresh; re-sampling a name is an error.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "spge/ast.hpp"
#include "spge/rng.hpp"
#include "spge/universe.hpp"

namespace spge {

inline constexpr std::int64_t kDefaultBudget = 1'000'000;

struct DivergedError : std::runtime_error {
  DivergedError() : std::runtime_error("execution exceeded its step budget") {}
};

struct DoubleSampleError : std::runtime_error {
  Name name;
  explicit DoubleSampleError(Name n)
      : std::runtime_error("name (" + n.str + "," + std::to_string(n.index) +
                           ") sampled more than once"),
        name(std::move(n)) {}
};

// ---------------------------------------------------------------------------
// Forward-mode dual numbers
// ---------------------------------------------------------------------------

// Value plus tangent vector. An empty tangent means "constant"; tangents of
// different lengths combine by treating the missing tail as zero, so
// constants never allocate.
struct Dual {
  double val = 0.0;
  std::vector<double> dot;

  Dual() = default;
  explicit Dual(double v) : val(v) {}
  Dual(double v, std::vector<double> d) : val(v), dot(std::move(d)) {}

  static Dual seeded(double v, std::size_t coord, std::size_t dim) {
    Dual d(v);
    d.dot.assign(dim, 0.0);
    d.dot[coord] = 1.0;
    return d;
  }
};

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.val; }

inline double make_scalar(double v, double /*proto*/) { return v; }
inline Dual make_scalar(double v, const Dual& /*proto*/) { return Dual(v); }

inline double apply_op(Op op, const double* args, std::size_t) {
  return op_value(op, args);
}

inline Dual apply_op(Op op, const Dual* args, std::size_t n) {
  double a[3];
  for (std::size_t i = 0; i < n; ++i) a[i] = args[i].val;
  double p[3];
  op_partials(op, a, p);
  std::size_t dim = 0;
  for (std::size_t i = 0; i < n; ++i) dim = std::max(dim, args[i].dot.size());
  Dual out(op_value(op, a));
  out.dot.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = p[i];
    if (pi == 0.0) continue;
    const std::vector<double>& di = args[i].dot;
    for (std::size_t k = 0; k < di.size(); ++k) out.dot[k] += pi * di[k];
  }
  return out;
}

template <class T>
T scalar_add(const T& a, double b) {
  if constexpr (std::is_same_v<T, double>) {
    return a + b;
  } else {
    Dual out = a;
    out.val += b;
    return out;
  }
}

template <class T>
T scalar_mul(const T& a, const T& b) {
  const T args[2] = {a, b};
  return apply_op(Op::Mul, args, 2);
}

template <class T>
T scalar_sum(const T& a, const T& b) {
  const T args[2] = {a, b};
  return apply_op(Op::Add, args, 2);
}

// ---------------------------------------------------------------------------
// Evaluation and execution
// ---------------------------------------------------------------------------

template <class T>
using State = std::vector<T>;

enum class ExecStatus : std::uint8_t { Ok, Diverged };

template <class T>
class Interp {
 public:
  explicit Interp(const Universe& u, std::int64_t budget = kDefaultBudget)
      : u_(u), budget_(budget) {}

  std::int64_t steps_left() const { return budget_; }

  // Evaluates `e`, with at most one lambda binder bound to `bound_value`.
  T eval(const Expr& e, const State<T>& st, const Var* binder = nullptr,
         const T* bound_value = nullptr) const {
    switch (e.kind) {
      case Expr::Kind::Const: return make_scalar(e.value, T{});
      case Expr::Kind::Ref:
        if (binder != nullptr && e.ref == *binder) return *bound_value;
        return st[u_.index(e.ref)];
      case Expr::Kind::Call: {
        T args[3];
        for (std::size_t i = 0; i < e.args.size(); ++i) {
          args[i] = eval(*e.args[i], st, binder, bound_value);
        }
        return apply_op(e.op->op, args, e.args.size());
      }
    }
    throw std::logic_error("eval: bad expression kind");
  }

  bool eval_bool(const BoolExpr& b, const State<T>& st) const {
    switch (b.kind) {
      case BoolExpr::Kind::True: return true;
      case BoolExpr::Kind::Less: return value_of(eval(*b.lhs, st)) < value_of(eval(*b.rhs, st));
      case BoolExpr::Kind::And: return eval_bool(*b.a, st) && eval_bool(*b.b, st);
      case BoolExpr::Kind::Not: return !eval_bool(*b.a, st);
    }
    throw std::logic_error("eval_bool: bad expression kind");
  }

  // Density-semantics execution; mutates `st` in place.
  ExecStatus run(const CmdPtr& c, State<T>& st) {
    switch (c->kind) {
      case Command::Kind::Skip: return charge();
      case Command::Kind::Assign: {
        if (charge() == ExecStatus::Diverged) return ExecStatus::Diverged;
        st[u_.index(c->target)] = eval(*c->expr, st);
        return ExecStatus::Ok;
      }
      case Command::Kind::Seq: {
        if (run(c->first, st) == ExecStatus::Diverged) return ExecStatus::Diverged;
        return run(c->second, st);
      }
      case Command::Kind::If: {
        if (charge() == ExecStatus::Diverged) return ExecStatus::Diverged;
        return run(eval_bool(*c->cond, st) ? c->first : c->second, st);
      }
      case Command::Kind::While: {
        for (;;) {
          if (charge() == ExecStatus::Diverged) return ExecStatus::Diverged;
          if (!eval_bool(*c->cond, st)) return ExecStatus::Ok;
          if (run(c->first, st) == ExecStatus::Diverged) return ExecStatus::Diverged;
        }
      }
      case Command::Kind::Sample: {
        if (charge() == ExecStatus::Diverged) return ExecStatus::Diverged;
        const Name mu = create_name(c->name.str, value_of(eval(*c->name.index, st)), u_.name_bound());
        const T current = st[u_.index_name_val(mu)];
        const T drawn = eval(*c->lam.body, st, &c->lam.binder, &current);
        const T args[3] = {current, eval(*c->dist.mean, st), eval(*c->dist.variance, st)};
        st[u_.index_pr(mu)] = apply_op(Op::NormalPdf, args, 3);
        st[u_.index(c->target)] = drawn;
        st[u_.index_val(mu)] = drawn;
        st[u_.index_cnt(mu)] = scalar_add(st[u_.index_cnt(mu)], 1.0);
        return ExecStatus::Ok;
      }
      case Command::Kind::Observe: {
        if (charge() == ExecStatus::Diverged) return ExecStatus::Diverged;
        const T args[3] = {make_scalar(c->observed, T{}), eval(*c->dist.mean, st),
                           eval(*c->dist.variance, st)};
        const std::size_t like = u_.index_like();
        st[like] = scalar_mul(st[like], apply_op(Op::NormalPdf, args, 3));
        return ExecStatus::Ok;
      }
    }
    throw std::logic_error("run: bad command kind");
  }

 private:
  ExecStatus charge() {
    if (budget_ <= 0) return ExecStatus::Diverged;
    --budget_;
    return ExecStatus::Ok;
  }

  const Universe& u_;
  std::int64_t budget_;
};

// One-shot execution helper.
template <class T>
ExecStatus exec(const CmdPtr& c, const Universe& u, State<T>& st,
                std::int64_t budget = kDefaultBudget) {
  Interp<T> in(u, budget);
  return in.run(c, st);
}

// ---------------------------------------------------------------------------
// Sampling semantics
// ---------------------------------------------------------------------------

// Runs `c` in sampling semantics: `params` gives values for the leading
// universe parameters (the trainable ones come first by construction) and
// every remaining program variable starts at zero, as in the reference
// initial store. Each sample statement draws its name's raw value fresh from
// the statement's distribution; names never sampled are filled with
// independent standard normal draws afterwards (matching their prior).
// Returns the complete name valuation, one value per universe name slot.
//
// Throws DoubleSampleError if a name is sampled twice and DivergedError if
// the step budget runs out.
inline std::vector<double> exec_sampling(const CmdPtr& c, const Universe& u,
                                         const std::vector<double>& params, Rng rng,
                                         std::int64_t budget = kDefaultBudget) {
  State<double> st(u.size(), 0.0);
  st[u.index_like()] = 1.0;
  if (params.size() > u.params().size()) {
    throw std::out_of_range("more parameter values than universe parameters");
  }
  const std::size_t param_base = 1 + 4 * u.name_count();
  for (std::size_t p = 0; p < params.size(); ++p) st[param_base + p] = params[p];
  std::vector<bool> drawn(u.name_count(), false);

  // Local recursive runner: like Interp::run but Sample draws.
  Interp<double> in(u, budget);
  std::int64_t steps = budget;
  auto charge = [&]() {
    if (steps <= 0) throw DivergedError();
    --steps;
  };

  auto run = [&](auto&& self, const CmdPtr& cmd) -> void {
    switch (cmd->kind) {
      case Command::Kind::Skip: charge(); return;
      case Command::Kind::Assign:
        charge();
        st[u.index(cmd->target)] = in.eval(*cmd->expr, st);
        return;
      case Command::Kind::Seq:
        self(self, cmd->first);
        self(self, cmd->second);
        return;
      case Command::Kind::If:
        charge();
        self(self, in.eval_bool(*cmd->cond, st) ? cmd->first : cmd->second);
        return;
      case Command::Kind::While:
        for (;;) {
          charge();
          if (!in.eval_bool(*cmd->cond, st)) return;
          self(self, cmd->first);
        }
      case Command::Kind::Sample: {
        charge();
        const Name mu =
            create_name(cmd->name.str, in.eval(*cmd->name.index, st), u.name_bound());
        const std::size_t slot = u.name_slot(mu);
        if (st[u.index_cnt(mu)] != 0.0) throw DoubleSampleError(mu);
        const double mean = in.eval(*cmd->dist.mean, st);
        const double variance = in.eval(*cmd->dist.variance, st);
        const double sd = std::sqrt(variance > 0.0 ? variance : kDefaultVariance);
        const double raw = mean + sd * rng.normal();
        st[u.index_name_val(mu)] = raw;
        drawn[slot] = true;
        const double mapped = in.eval(*cmd->lam.body, st, &cmd->lam.binder, &raw);
        const double args[3] = {raw, mean, variance};
        st[u.index_pr(mu)] = apply_op(Op::NormalPdf, args, 3);
        st[u.index(cmd->target)] = mapped;
        st[u.index_val(mu)] = mapped;
        st[u.index_cnt(mu)] = 1.0;
        return;
      }
      case Command::Kind::Observe: {
        charge();
        const double args[3] = {cmd->observed, in.eval(*cmd->dist.mean, st),
                                in.eval(*cmd->dist.variance, st)};
        st[u.index_like()] *= apply_op(Op::NormalPdf, args, 3);
        return;
      }
    }
  };
  run(run, c);

  std::vector<double> names(u.name_count());
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    names[slot] = drawn[slot] ? st[1 + 4 * slot] : rng.normal();
  }
  return names;
}

// Checks the no-double-sampling property on `trials` random stores: after
// execution no name's draw counter may have grown by more than one. Returns
// false as soon as a violating store is found; divergence propagates.
inline bool check_no_double_sampling(const CmdPtr& c, const Universe& u, int trials, Rng rng,
                                     std::int64_t budget = kDefaultBudget) {
  for (int t = 0; t < trials; ++t) {
    Rng r = rng.stream(static_cast<std::uint64_t>(t));
    State<double> st(u.size());
    for (std::size_t i = 0; i < st.size(); ++i) st[i] = 2.0 * r.normal();
    st[u.index_like()] = std::abs(st[u.index_like()]) + 0.5;
    for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
      st[4 + 4 * slot] = static_cast<double>(r.next_u64() % 3);  // cnt in {0,1,2}
      st[2 + 4 * slot] = std::abs(st[2 + 4 * slot]) + 0.1;       // pr positive
    }
    State<double> before = st;
    if (exec(c, u, st, budget) == ExecStatus::Diverged) throw DivergedError();
    for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
      if (st[4 + 4 * slot] - before[4 + 4 * slot] > 1.5) return false;
    }
  }
  return true;
}

}  // namespace spge
