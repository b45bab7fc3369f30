// Variable selection: decide which name strings to rewrite so that the
// resulting estimator's pathwise terms stay smooth in the parameters.
//
// The algorithm runs the smoothness analysis on the model and the guide,
// intersects the smooth sets of the likelihood cell and every prior cell
// into a kernel K, and requires the parameters to lie in K (feasibility).
// Candidate strings are those whose every indexed slot lies in K. It then
// rewrites the guide under the candidate plan and checks that the parameters
// stay inside the smooth sets of every prior and value cell of the rewritten
// guide; on failure the lexicographically smallest candidate is dropped and
// the loop repeats. An emptied candidate set yields the empty plan without a
// further analysis run, so at most |candidates| + 2 analysis calls happen.

#pragma once

#include <set>
#include <string>
#include <vector>

#include "spge/analysis.hpp"
#include "spge/ast.hpp"
#include "spge/reparam.hpp"
#include "spge/universe.hpp"

namespace spge {

struct SelectionResult {
  enum class Kind { Plan, Infeasible };
  Kind kind = Kind::Infeasible;
  ReparamPlan plan;                 // meaningful when kind == Plan
  std::string reason;               // meaningful when kind == Infeasible
  int analysis_calls = 0;
  bool first_iteration = false;     // did the initial candidate set pass?
  VarSet kernel;                    // K, over universe variables
  std::set<std::string> candidates; // the initial candidate strings
};

// Deterministic removal order for the shrink loop.
inline std::vector<std::string> greedy_shrink_order(const std::set<std::string>& s) {
  return {s.begin(), s.end()};  // std::set iterates in lexicographic order
}

namespace detail {

// The model's likelihood row intersected with every prior row of both
// programs.
inline VarSet smooth_kernel(const AbsTriple& tm, const AbsTriple& tg, const Universe& u) {
  VarSet k = tm.p[u.index_like()];
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    k &= tm.p[2 + 4 * slot];
    k &= tg.p[2 + 4 * slot];
  }
  return k;
}

inline bool thetas_in(const VarSet& set, const Universe& u, std::size_t n_theta) {
  for (std::size_t i = 0; i < n_theta; ++i) {
    if (!set.test(u.index_param(u.params()[i]))) return false;
  }
  return true;
}

// The rewritten-guide condition: parameters inside the smooth sets of every
// prior and value cell.
inline bool rewritten_guide_ok(const AbsTriple& t, const Universe& u, std::size_t n_theta) {
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    if (!thetas_in(t.p[2 + 4 * slot], u, n_theta)) return false;
    if (!thetas_in(t.p[3 + 4 * slot], u, n_theta)) return false;
  }
  return true;
}

}  // namespace detail

inline SelectionResult select_variables(const CmdPtr& model, const CmdPtr& guide,
                                        const ReparamPlan& pi0, Property prop,
                                        const Universe& u, std::size_t n_theta,
                                        bool with_intervals = true) {
  SelectionResult r;
  const AbsTriple tm = abstract_exec(model, u, prop, with_intervals);
  const AbsTriple tg = abstract_exec(guide, u, prop, with_intervals);
  r.analysis_calls = 2;
  r.kernel = detail::smooth_kernel(tm, tg, u);

  // Feasibility: every trainable parameter must lie in the kernel.
  for (std::size_t i = 0; i < n_theta; ++i) {
    if (!r.kernel.test(u.index_param(u.params()[i]))) {
      r.kind = SelectionResult::Kind::Infeasible;
      r.reason = "parameter " + u.params()[i] +
                 " falls outside the smooth kernel; no selection can discharge "
                 "the smoothness requirement";
      return r;
    }
  }

  // Candidates: strings whose every indexed slot lies in the kernel, limited
  // to what the input plan covers.
  std::set<std::string> s;
  {
    std::set<std::string> strings;
    for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
      strings.insert(u.name_at(slot).str);
    }
    for (const std::string& str : strings) {
      if (!pi0.defined_for(str)) continue;
      bool all = true;
      for (int i = 0; i < u.name_bound(); ++i) {
        if (!r.kernel.test(u.index_name_val(Name{str, i}))) {
          all = false;
          break;
        }
      }
      if (all) s.insert(str);
    }
  }
  r.candidates = s;

  bool first = true;
  while (!s.empty()) {
    const ReparamPlan plan = restrict_plan(pi0, s);
    const AbsTriple tbar = abstract_exec(transform(guide, plan), u, prop, with_intervals);
    ++r.analysis_calls;
    if (detail::rewritten_guide_ok(tbar, u, n_theta)) {
      r.kind = SelectionResult::Kind::Plan;
      r.plan = plan;
      r.first_iteration = first;
      return r;
    }
    first = false;
    s.erase(greedy_shrink_order(s).front());
  }

  // Nothing survived: the empty plan is trivially acceptable and needs no
  // analysis of its own (it rewrites nothing).
  r.kind = SelectionResult::Kind::Plan;
  r.plan = restrict_plan(pi0, {});
  r.first_iteration = first;
  return r;
}

}  // namespace spge
