// Reparameterisation plans and the sample-rewriting transform.
//
// A plan selects name strings and carries one rewrite rule per distribution
// constructor (Normal is the only constructor in the language). Membership
// depends on a name's string part only, so a plan either rewrites every index
// of a name or none of them. The built-in rule standardises Normal draws:
//
//   (N(e1, e2), lam y. e3)  becomes  (N(0, 1), lam y. e3[(y * sqrt(e2) + e1)/y])
//
// which moves the distribution's parameters into the transport lambda while
// preserving the law of the mapped value.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spge/ast.hpp"
#include "spge/interp.hpp"
#include "spge/rng.hpp"
#include "spge/universe.hpp"

namespace spge {

enum class RuleTag { KnownValid, Unverified };

// Rewrite for one distribution constructor: maps the sample's distribution
// and transport lambda to their replacements.
struct RewriteRule {
  std::string name;
  RuleTag tag = RuleTag::Unverified;
  std::function<std::pair<DistExpr, Lambda>(const DistExpr&, const Lambda&)> apply;
};

// The standardisation rule. The output distribution is constant, so the
// rewritten sample's score factors carry no parameter dependence.
inline RewriteRule normal_standardise_rule() {
  RewriteRule r;
  r.name = "normal-standardise";
  r.tag = RuleTag::KnownValid;
  r.apply = [](const DistExpr& d, const Lambda& l) {
    ExprPtr mapped = mk_call(
        Op::Add, {mk_call(Op::Mul, {mk_ref(l.binder), mk_call(Op::Sqrt, {d.variance})}),
                  d.mean});
    return std::pair<DistExpr, Lambda>{DistExpr{mk_const(0.0), mk_const(1.0)},
                                       Lambda{l.binder, subst(l.body, l.binder, mapped)}};
  };
  return r;
}

// Leaves the sample untouched. Useful as a trivially valid baseline.
inline RewriteRule identity_rule() {
  RewriteRule r;
  r.name = "identity";
  r.tag = RuleTag::Unverified;
  r.apply = [](const DistExpr& d, const Lambda& l) {
    return std::pair<DistExpr, Lambda>{d, l};
  };
  return r;
}

struct ReparamPlan {
  // When set, every name string is selected; `selected` is ignored.
  bool select_all = false;
  std::set<std::string> selected;
  // One rule per distribution constructor. The language has a single
  // constructor, so at most one entry is ever consulted.
  std::vector<RewriteRule> rules;

  bool defined_for(const std::string& name_string) const {
    if (rules.empty()) return false;
    return select_all || selected.count(name_string) > 0;
  }
};

// Every name string selected, standardisation installed.
inline ReparamPlan default_plan() {
  ReparamPlan p;
  p.select_all = true;
  p.rules.push_back(normal_standardise_rule());
  return p;
}

// No name selected; transforms nothing.
inline ReparamPlan empty_plan() {
  ReparamPlan p;
  p.rules.push_back(normal_standardise_rule());
  return p;
}

// Intersects the selection with `s`. Idempotent; the result never selects
// more than the input did.
inline ReparamPlan restrict_plan(const ReparamPlan& plan, const std::set<std::string>& s) {
  ReparamPlan out;
  out.select_all = false;
  out.rules = plan.rules;
  if (plan.select_all) {
    out.selected = s;
  } else {
    std::set_intersection(plan.selected.begin(), plan.selected.end(), s.begin(), s.end(),
                          std::inserter(out.selected, out.selected.begin()));
  }
  return out;
}

// Rewrites every sample command whose name string the plan covers; all other
// structure is preserved. Untouched subtrees are shared, so a plan that
// matches nothing returns the input pointer.
inline CmdPtr transform(const CmdPtr& c, const ReparamPlan& plan) {
  switch (c->kind) {
    case Command::Kind::Skip:
    case Command::Kind::Assign:
    case Command::Kind::Observe: return c;
    case Command::Kind::Seq: {
      CmdPtr a = transform(c->first, plan);
      CmdPtr b = transform(c->second, plan);
      if (a == c->first && b == c->second) return c;
      return mk_seq(std::move(a), std::move(b));
    }
    case Command::Kind::If: {
      CmdPtr a = transform(c->first, plan);
      CmdPtr b = transform(c->second, plan);
      if (a == c->first && b == c->second) return c;
      return mk_if(c->cond, std::move(a), std::move(b));
    }
    case Command::Kind::While: {
      CmdPtr body = transform(c->first, plan);
      if (body == c->first) return c;
      return mk_while(c->cond, std::move(body));
    }
    case Command::Kind::Sample: {
      if (!plan.defined_for(c->name.str)) return c;
      auto [dist, lam] = plan.rules.front().apply(c->dist, c->lam);
      return mk_sample(c->target, c->name, std::move(dist), std::move(lam));
    }
  }
  throw std::logic_error("unreachable command kind");
}

// Name slots the plan rewrites, as a bitset over the universe's slots. A
// string is in or out as a whole, so the result is closed over indices.
inline VarSet rv_slots(const ReparamPlan& plan, const Universe& u) {
  VarSet s(u.name_count());
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    if (plan.defined_for(u.name_at(slot).str)) s.set(slot);
  }
  return s;
}

// True when every rule's output distribution is a constant expression. A
// constant output distribution makes the rewritten score factors
// parameter-free, which is what lets the estimator drop their score term.
inline bool check_r4_structural(const ReparamPlan& plan) {
  const Var binder = Var::param("$probe_y");
  const DistExpr probe{mk_ref(Var::param("$probe_mean")), mk_ref(Var::param("$probe_var"))};
  const Lambda lam{binder, mk_ref(binder)};
  for (const RewriteRule& rule : plan.rules) {
    auto [dist, unused] = rule.apply(probe, lam);
    (void)unused;
    if (!free_vars(*dist.mean).empty() || !free_vars(*dist.variance).empty()) return false;
  }
  return true;
}

// Two-sample Kolmogorov-Smirnov machinery for the statistical validity check.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    const double fa = static_cast<double>(i) / static_cast<double>(a.size());
    const double fb = static_cast<double>(j) / static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

inline double ks_critical(double alpha, std::size_t n, std::size_t m) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) *
         std::sqrt(static_cast<double>(n + m) /
                   (static_cast<double>(n) * static_cast<double>(m)));
}

// Falsification check for a rule: at `trials` random stores, compares the
// law of the original mapped draw with the law of the rewritten mapped draw
// by a two-sample KS test. Returns false iff any trial rejects at alpha.
// Known-valid rules must always pass; the check cannot prove validity.
inline bool check_validity_mc(const RewriteRule& rule, const DistExpr& dist,
                              const Lambda& lam, const Universe& u, Rng rng,
                              int trials = 20, int draws = 10000,
                              double alpha = 1e-4) {
  auto [dist2, lam2] = rule.apply(dist, lam);
  Interp<double> in(u);
  const double crit = ks_critical(alpha, static_cast<std::size_t>(draws),
                                  static_cast<std::size_t>(draws));
  for (int t = 0; t < trials; ++t) {
    Rng trial = rng.stream(static_cast<std::uint64_t>(t));
    State<double> st(u.size());
    for (auto& x : st) x = 2.0 * trial.normal();
    const auto mapped_draws = [&](const DistExpr& d, const Lambda& l) {
      const double mean = in.eval(*d.mean, st);
      const double variance = in.eval(*d.variance, st);
      const double sd = std::sqrt(variance > 0.0 ? variance : kDefaultVariance);
      std::vector<double> out(static_cast<std::size_t>(draws));
      for (double& v : out) {
        const double raw = mean + sd * trial.normal();
        v = in.eval(*l.body, st, &l.binder, &raw);
      }
      return out;
    };
    if (ks_statistic(mapped_draws(dist, lam), mapped_draws(dist2, lam2)) > crit) {
      return false;
    }
  }
  return true;
}

}  // namespace spge
