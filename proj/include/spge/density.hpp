#pragma once

// Densities induced by a program over its name valuation.
//
// Every function here starts from the same reference store: likelihood one,
// each name's raw and recorded value set to the valuation entry, each prior
// cell holding the standard normal density of that entry, draw counters zero,
// the leading (trainable) parameters set from `theta`, and every other
// program variable zero. Running the program in density semantics then turns
// the store into
//
//   density            likelihood times the product of every prior cell,
//                      zero when the run diverges or draws a name twice;
//   log_density        the same in log space, throwing instead of
//                      returning zero;
//   log_partial_density  log of the prior-cell product over a chosen set of
//                      name slots, no likelihood, no double-draw guard;
//   value_fn           the recorded value of every name, all zeros when the
//                      run diverges or draws a name twice.
//
// All of them are generic over the scalar type, so parameter gradients flow
// through unchanged when called on dual numbers.
//
// elbo_quadrature integrates guide * log(model/guide) over a tensor grid for
// programs that touch at most two name slots. It exists as a slow, exact
// reference for the sampling-based estimators.

#include <cstring>
#include <stdexcept>
#include <vector>

#include "spge/ast.hpp"
#include "spge/interp.hpp"
#include "spge/universe.hpp"

namespace spge {

struct ZeroDensityError : std::runtime_error {
  ZeroDensityError() : std::runtime_error("program density is zero at this valuation") {}
};

struct TooManyNamesError : std::runtime_error {
  TooManyNamesError()
      : std::runtime_error("quadrature supports at most two reachable name slots") {}
};

inline std::vector<Dual> seed_duals(const std::vector<double>& xs) {
  std::vector<Dual> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = Dual::seeded(xs[i], i, xs.size());
  return out;
}

inline std::vector<Dual> constant_duals(const std::vector<double>& xs) {
  std::vector<Dual> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = Dual(xs[i]);
  return out;
}

// The reference store described above.
template <class T>
State<T> make_sigma0(const Universe& u, const std::vector<T>& theta,
                     const std::vector<T>& names) {
  if (names.size() != u.name_count()) {
    throw std::invalid_argument("make_sigma0: one value per name slot required");
  }
  if (theta.size() > u.params().size()) {
    throw std::invalid_argument("make_sigma0: more parameter values than parameters");
  }
  State<T> st(u.size(), make_scalar(0.0, T{}));
  st[u.index_like()] = make_scalar(1.0, T{});
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    const T args[3] = {names[slot], make_scalar(0.0, T{}), make_scalar(1.0, T{})};
    st[1 + 4 * slot] = names[slot];                       // raw value
    st[2 + 4 * slot] = apply_op(Op::NormalPdf, args, 3);  // prior cell
    st[3 + 4 * slot] = names[slot];                       // recorded value
  }
  const std::size_t param_base = 1 + 4 * u.name_count();
  for (std::size_t p = 0; p < theta.size(); ++p) st[param_base + p] = theta[p];
  return st;
}

namespace detail {

template <class T>
bool guard_ok(const Universe& u, const State<T>& st) {
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    if (value_of(st[4 + 4 * slot]) > 1.5) return false;
  }
  return true;
}

}  // namespace detail

// Full density: likelihood times every prior cell; zero when the guard trips.
template <class T>
T density(const CmdPtr& c, const Universe& u, const std::vector<T>& theta,
          const std::vector<T>& names, std::int64_t budget = kDefaultBudget) {
  State<T> st = make_sigma0(u, theta, names);
  if (exec(c, u, st, budget) == ExecStatus::Diverged || !detail::guard_ok(u, st)) {
    return make_scalar(0.0, T{});
  }
  T acc = st[u.index_like()];
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    acc = scalar_mul(acc, st[2 + 4 * slot]);
  }
  return acc;
}

// Log of the full density. Throws ZeroDensityError whenever `density` would
// return zero (divergence, a double draw, or a non-positive factor).
template <class T>
T log_density(const CmdPtr& c, const Universe& u, const std::vector<T>& theta,
              const std::vector<T>& names, std::int64_t budget = kDefaultBudget) {
  State<T> st = make_sigma0(u, theta, names);
  if (exec(c, u, st, budget) == ExecStatus::Diverged || !detail::guard_ok(u, st)) {
    throw ZeroDensityError();
  }
  if (!(value_of(st[u.index_like()]) > 0.0)) throw ZeroDensityError();
  T args[1] = {st[u.index_like()]};
  T acc = apply_op(Op::Log, args, 1);
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    if (!(value_of(st[2 + 4 * slot]) > 0.0)) throw ZeroDensityError();
    args[0] = st[2 + 4 * slot];
    acc = scalar_sum(acc, apply_op(Op::Log, args, 1));
  }
  return acc;
}

// Log of the prior-cell product over the name slots in `slots` (a bitset over
// name slots, not universe indices). No likelihood factor and no double-draw
// guard; divergence and non-positive factors throw.
template <class T>
T log_partial_density(const CmdPtr& c, const Universe& u, const std::vector<T>& theta,
                      const std::vector<T>& names, const VarSet& slots,
                      std::int64_t budget = kDefaultBudget) {
  State<T> st = make_sigma0(u, theta, names);
  if (exec(c, u, st, budget) == ExecStatus::Diverged) throw DivergedError();
  T acc = make_scalar(0.0, T{});
  bool bad_factor = false;
  slots.for_each([&](std::size_t slot) {
    if (bad_factor) return;
    if (!(value_of(st[2 + 4 * slot]) > 0.0)) {
      bad_factor = true;
      return;
    }
    const T args[1] = {st[2 + 4 * slot]};
    acc = scalar_sum(acc, apply_op(Op::Log, args, 1));
  });
  if (bad_factor) throw ZeroDensityError();
  return acc;
}

// The value function: the recorded value of every name slot after the run,
// or all zeros when the run diverges or draws a name twice.
template <class T>
std::vector<T> value_fn(const CmdPtr& c, const Universe& u, const std::vector<T>& theta,
                        const std::vector<T>& names, std::int64_t budget = kDefaultBudget) {
  State<T> st = make_sigma0(u, theta, names);
  if (exec(c, u, st, budget) == ExecStatus::Diverged || !detail::guard_ok(u, st)) {
    return std::vector<T>(u.name_count(), make_scalar(0.0, T{}));
  }
  std::vector<T> out(u.name_count());
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) out[slot] = st[3 + 4 * slot];
  return out;
}

// ---------------------------------------------------------------------------
// Exact reference: grid quadrature of the objective
// ---------------------------------------------------------------------------

struct QuadratureSpec {
  double lo = -10.0;
  double hi = 10.0;
  int points_per_axis = 2001;
};

struct ElboEstimate {
  double value = 0.0;
  std::vector<double> grad;
};

namespace detail {

// Name slots a program can touch: a sample with a constant index lands on one
// slot, a dynamic index may land anywhere in its string's range, and any
// direct reference to a raw name value counts as well.
inline void add_reachable_slots(const CmdPtr& program, const Universe& u, VarSet& slots) {
  const auto note_expr = [&](const Expr& e) {
    for_each_free_var(e, [&](const Var& v) {
      if (v.kind == VarKind::NameVal || v.kind == VarKind::Val || v.kind == VarKind::Pr) {
        slots.set(u.name_slot(Name{v.id, v.index}));
      }
    });
  };
  for_each_command(program, [&](const CmdPtr& c) {
    switch (c->kind) {
      case Command::Kind::Assign: note_expr(*c->expr); break;
      case Command::Kind::Sample: {
        note_expr(*c->name.index);
        note_expr(*c->dist.mean);
        note_expr(*c->dist.variance);
        note_expr(*c->lam.body);
        if (c->name.index->kind == Expr::Kind::Const) {
          slots.set(u.name_slot(create_name(c->name.str, c->name.index->value, u.name_bound())));
        } else {
          for (int i = 0; i < u.name_bound(); ++i) slots.set(u.name_slot(Name{c->name.str, i}));
        }
        break;
      }
      case Command::Kind::Observe:
        note_expr(*c->dist.mean);
        note_expr(*c->dist.variance);
        break;
      default: break;
    }
  });
}

// Likelihood times the prior cells of the active slots, after running the
// program on the shared work store. Returns zero when the guard trips.
template <class T>
T weighted_density(const CmdPtr& c, const Universe& u, State<T>& work,
                   const std::vector<std::size_t>& active, std::int64_t budget) {
  if (exec(c, u, work, budget) == ExecStatus::Diverged) return make_scalar(0.0, T{});
  for (const std::size_t slot : active) {
    if (value_of(work[4 + 4 * slot]) > 1.5) return make_scalar(0.0, T{});
  }
  T acc = work[u.index_like()];
  for (const std::size_t slot : active) acc = scalar_mul(acc, work[2 + 4 * slot]);
  return acc;
}

inline void copy_state(State<double>& dst, const State<double>& src) {
  std::memcpy(dst.data(), src.data(), src.size() * sizeof(double));
}

inline void copy_state(State<Dual>& dst, const State<Dual>& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];  // keeps tangent capacity
}

// One integrand sweep, generic over the scalar type. Deterministic pairwise
// reduction: rows first, then across rows.
template <class T>
T quadrature_sum(const CmdPtr& model, const CmdPtr& guide, const Universe& u,
                 const std::vector<T>& theta, const QuadratureSpec& spec, std::int64_t budget) {
  VarSet slot_set(u.name_count());
  add_reachable_slots(model, u, slot_set);
  add_reachable_slots(guide, u, slot_set);
  std::vector<std::size_t> active;
  slot_set.for_each([&](std::size_t s) { active.push_back(s); });
  if (active.size() > 2) throw TooManyNamesError();

  const int pts = spec.points_per_axis;
  if (pts < 2 || !(spec.hi > spec.lo)) throw std::invalid_argument("bad quadrature spec");
  const double h = (spec.hi - spec.lo) / (pts - 1);
  const int dims = static_cast<int>(active.size());
  const int cols = dims >= 1 ? pts : 1;
  const int rows = dims == 2 ? pts : 1;

  const std::vector<T> zero_names(u.name_count(), make_scalar(0.0, T{}));
  const State<T> proto = make_sigma0(u, theta, zero_names);
  State<T> work_m = proto;
  State<T> work_g = proto;

  const auto set_name = [&](State<T>& st, std::size_t slot, double x) {
    const T v = make_scalar(x, T{});
    const T args[3] = {v, make_scalar(0.0, T{}), make_scalar(1.0, T{})};
    st[1 + 4 * slot] = v;
    st[2 + 4 * slot] = apply_op(Op::NormalPdf, args, 3);
    st[3 + 4 * slot] = v;
  };

  std::vector<T> row(static_cast<std::size_t>(cols));
  std::vector<T> row_sums(static_cast<std::size_t>(rows));
  for (int j = 0; j < rows; ++j) {
    const double xj = spec.lo + h * j;
    for (int i = 0; i < cols; ++i) {
      const double xi = spec.lo + h * i;
      copy_state(work_m, proto);
      copy_state(work_g, proto);
      if (dims >= 1) {
        set_name(work_m, active[0], xi);
        set_name(work_g, active[0], xi);
      }
      if (dims == 2) {
        set_name(work_m, active[1], xj);
        set_name(work_g, active[1], xj);
      }
      const T pg = weighted_density(guide, u, work_g, active, budget);
      T cell = make_scalar(0.0, T{});
      if (value_of(pg) > 0.0) {
        const T pm = weighted_density(model, u, work_m, active, budget);
        if (!(value_of(pm) > 0.0)) throw ZeroDensityError();
        T args[1] = {pm};
        const T log_pm = apply_op(Op::Log, args, 1);
        args[0] = pg;
        const T log_pg = apply_op(Op::Log, args, 1);
        const T diff_args[2] = {log_pm, log_pg};
        const T ratio = apply_op(Op::Sub, diff_args, 2);
        cell = scalar_mul(pg, ratio);
      }
      double weight = (dims >= 1 && (i == 0 || i == cols - 1)) ? 0.5 : 1.0;
      if (dims == 2 && (j == 0 || j == rows - 1)) weight *= 0.5;
      const T w = make_scalar(weight, T{});
      row[static_cast<std::size_t>(i)] = scalar_mul(cell, w);
    }
    // Pairwise fold of the row.
    for (std::size_t width = 1; width < row.size(); width *= 2) {
      for (std::size_t a = 0; a + width < row.size(); a += 2 * width) {
        const T args[2] = {row[a], row[a + width]};
        row[a] = apply_op(Op::Add, args, 2);
      }
    }
    row_sums[static_cast<std::size_t>(j)] = row[0];
  }
  for (std::size_t width = 1; width < row_sums.size(); width *= 2) {
    for (std::size_t a = 0; a + width < row_sums.size(); a += 2 * width) {
      const T args[2] = {row_sums[a], row_sums[a + width]};
      row_sums[a] = apply_op(Op::Add, args, 2);
    }
  }
  double scale = 1.0;
  for (int d = 0; d < dims; ++d) scale *= h;
  return scalar_mul(row_sums[0], make_scalar(scale, T{}));
}

}  // namespace detail

// Grid value of the objective (no gradient): fast scalar sweep.
inline double elbo_quadrature_value(const CmdPtr& model, const CmdPtr& guide, const Universe& u,
                                    const std::vector<double>& theta, QuadratureSpec spec = {},
                                    std::int64_t budget = kDefaultBudget) {
  return detail::quadrature_sum(model, guide, u, theta, spec, budget);
}

// Grid value and parameter gradient of the objective, via dual numbers.
inline ElboEstimate elbo_quadrature(const CmdPtr& model, const CmdPtr& guide, const Universe& u,
                                    const std::vector<double>& theta, QuadratureSpec spec = {},
                                    std::int64_t budget = kDefaultBudget) {
  const Dual total = detail::quadrature_sum(model, guide, u, seed_duals(theta), spec, budget);
  ElboEstimate out;
  out.value = total.val;
  out.grad.assign(theta.size(), 0.0);
  for (std::size_t i = 0; i < total.dot.size() && i < out.grad.size(); ++i) {
    out.grad[i] = total.dot[i];
  }
  return out;
}

// Independent cross-check of the quadrature gradient: central differences of
// the scalar sweep.
inline std::vector<double> elbo_grad_fd(const CmdPtr& model, const CmdPtr& guide,
                                        const Universe& u, const std::vector<double>& theta,
                                        double step = 1e-4, QuadratureSpec spec = {},
                                        std::int64_t budget = kDefaultBudget) {
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> hi = theta;
    std::vector<double> lo = theta;
    hi[i] += step;
    lo[i] -= step;
    grad[i] = (elbo_quadrature_value(model, guide, u, hi, spec, budget) -
               elbo_quadrature_value(model, guide, u, lo, spec, budget)) /
              (2 * step);
  }
  return grad;
}

}  // namespace spge
