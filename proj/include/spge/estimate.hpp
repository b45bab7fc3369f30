// Gradient estimators for the variational objective and the stochastic
// gradient-ascent driver.
//
// The selective estimator draws a raw valuation from the rewritten guide's
// prior, maps it through the guide's transport lambdas, and combines three
// terms at the mapped point: the score of the untouched prior factors times
// the log model/guide ratio, minus the score of the rewritten factors, plus
// the model's own score. Parameter derivatives are total derivatives: they
// flow through the mapped point (forward-mode duals) as well as through the
// densities' explicit parameter arguments. The score-function estimator is
// the empty selection; the fully pathwise estimator is the full selection.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spge/ast.hpp"
#include "spge/density.hpp"
#include "spge/interp.hpp"
#include "spge/reparam.hpp"
#include "spge/rng.hpp"
#include "spge/universe.hpp"

namespace spge {

struct GradEstimate {
  std::vector<double> grad;
  std::vector<double> se;  // per-coordinate standard error of the mean; zeros for one sample
  int samples = 0;
  std::uint64_t seed = 0;
};

// Everything a gradient evaluation needs, built once per (model, guide,
// plan). The universe is stored by value so the estimator owns its layout.
struct Estimator {
  CmdPtr model;
  CmdPtr guide;
  CmdPtr guide_reparam;
  Universe universe;
  std::size_t n_theta = 0;
  VarSet rv;    // name slots the plan rewrites
  VarSet keep;  // their complement
  std::int64_t budget = kDefaultBudget;
};

inline Estimator make_estimator(const CmdPtr& model, const CmdPtr& guide,
                                const ReparamPlan& plan, const Universe& u,
                                std::size_t n_theta,
                                std::int64_t budget = kDefaultBudget) {
  if (contains_observe(guide)) {
    throw std::invalid_argument("the guide must not contain obs commands");
  }
  if (!all_lambdas_identity(guide)) {
    throw std::invalid_argument("the guide's transport lambdas must be the identity");
  }
  if (n_theta > u.params().size()) {
    throw std::out_of_range("more trainable parameters than universe parameters");
  }
  const VarSet rv = rv_slots(plan, u);
  return Estimator{model, guide, transform(guide, plan), u, n_theta, rv, ~rv, budget};
}

inline Estimator make_sce_estimator(const CmdPtr& model, const CmdPtr& guide,
                                    const Universe& u, std::size_t n_theta,
                                    std::int64_t budget = kDefaultBudget) {
  return make_estimator(model, guide, empty_plan(), u, n_theta, budget);
}

inline Estimator make_pge_estimator(const CmdPtr& model, const CmdPtr& guide,
                                    const Universe& u, std::size_t n_theta,
                                    std::int64_t budget = kDefaultBudget) {
  return make_estimator(model, guide, default_plan(), u, n_theta, budget);
}

namespace detail {

inline double dot_coord(const Dual& d, std::size_t k) {
  return k < d.dot.size() ? d.dot[k] : 0.0;
}

// Fixed-tree mean over sample gradients: deterministic regardless of how the
// rows were produced.
inline std::vector<double> pairwise_mean(std::vector<std::vector<double>> rows) {
  if (rows.empty()) return {};
  const std::size_t n = rows.size();
  for (std::size_t gap = 1; gap < n; gap *= 2) {
    for (std::size_t i = 0; i + gap < n; i += 2 * gap) {
      for (std::size_t k = 0; k < rows[i].size(); ++k) rows[i][k] += rows[i + gap][k];
    }
  }
  for (double& x : rows[0]) x /= static_cast<double>(n);
  return rows[0];
}

inline double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace detail

// Single-sample gradient at `theta` for a raw valuation `names_hat` drawn
// from the rewritten guide's prior. Throws ZeroDensityError when any density
// involved is zero (a double draw or divergence); silently biased estimates
// are exactly the failure mode this machinery exists to avoid.
inline std::vector<double> spge_grad(const Estimator& e, const std::vector<double>& theta,
                                     const std::vector<double>& names_hat) {
  const Universe& u = e.universe;
  if (theta.size() != e.n_theta) throw std::invalid_argument("theta size mismatch");

  // The guarded value function maps degenerate runs to the zero valuation,
  // so reject them up front.
  if (!(density<double>(e.guide_reparam, u, theta, names_hat, e.budget) > 0.0)) {
    throw ZeroDensityError();
  }

  const std::vector<Dual> theta_d = seed_duals(theta);
  const std::vector<Dual> mapped =
      value_fn<Dual>(e.guide_reparam, u, theta_d, constant_duals(names_hat), e.budget);

  const Dual zero;
  const Dual kept = e.keep.empty()
                        ? zero
                        : log_partial_density<Dual>(e.guide, u, theta_d, mapped, e.keep,
                                                    e.budget);
  const Dual rewritten = e.rv.empty()
                             ? zero
                             : log_partial_density<Dual>(e.guide, u, theta_d, mapped,
                                                         e.rv, e.budget);
  const Dual model_score = log_density<Dual>(e.model, u, theta_d, mapped, e.budget);

  // The guide is obs-free, so its log density is the sum of the two partial
  // scores.
  const double ratio =
      value_of(model_score) - (value_of(kept) + value_of(rewritten));

  std::vector<double> g(e.n_theta);
  for (std::size_t k = 0; k < e.n_theta; ++k) {
    g[k] = detail::dot_coord(kept, k) * ratio - detail::dot_coord(rewritten, k) +
           detail::dot_coord(model_score, k);
  }
  return g;
}

// Draws the raw valuation itself, then scores it.
inline std::vector<double> spge_sample_grad(const Estimator& e,
                                            const std::vector<double>& theta, Rng rng) {
  const std::vector<double> hat =
      exec_sampling(e.guide_reparam, e.universe, theta, rng, e.budget);
  return spge_grad(e, theta, hat);
}

// Monte-Carlo mean over `samples` independent draws, one RNG stream per
// sample, reduced with the fixed pairwise tree.
inline GradEstimate mc_grad(const Estimator& e, const std::vector<double>& theta,
                            int samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("at least one sample is required");
  Rng root = Rng(seed).stream("estimate");
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    rows[static_cast<std::size_t>(i)] =
        spge_sample_grad(e, theta, root.stream(static_cast<std::uint64_t>(i)));
  }
  GradEstimate out;
  out.grad = detail::pairwise_mean(rows);
  out.se.assign(out.grad.size(), 0.0);
  if (samples > 1) {
    for (auto& row : rows) {
      for (std::size_t k = 0; k < row.size(); ++k) {
        const double d = row[k] - out.grad[k];
        row[k] = d * d;
      }
    }
    const std::vector<double> mean_sq = detail::pairwise_mean(std::move(rows));
    const double n = static_cast<double>(samples);
    for (std::size_t k = 0; k < mean_sq.size(); ++k) {
      out.se[k] = std::sqrt(mean_sq[k] / (n - 1.0));
    }
  }
  out.samples = samples;
  out.seed = seed;
  return out;
}

struct SviConfig {
  double eta = 0.05;
  int steps = 2000;
  int samples = 16;
  std::uint64_t seed = 0;
};

struct SviRow {
  int step = 0;
  std::vector<double> theta;
  double grad_norm = 0.0;
};

struct SviResult {
  std::vector<SviRow> trajectory;  // row 0 is the initial point
  std::vector<double> theta;
  std::uint64_t seed = 0;
};

// Plain gradient ascent: T steps of theta += eta * mean gradient, M draws per
// step, one RNG stream per (step, sample) pair.
inline SviResult svi(const Estimator& e, std::vector<double> theta, const SviConfig& cfg) {
  if (!(cfg.eta >= 0.0)) throw std::invalid_argument("eta must be non-negative");
  if (cfg.steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (cfg.samples < 1) throw std::invalid_argument("at least one sample per step");
  if (theta.size() != e.n_theta) throw std::invalid_argument("theta size mismatch");

  SviResult out;
  out.seed = cfg.seed;
  out.trajectory.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  out.trajectory.push_back({0, theta, 0.0});

  Rng root = Rng(cfg.seed).stream("svi");
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(cfg.samples));
  for (int t = 1; t <= cfg.steps; ++t) {
    Rng step_rng = root.stream(static_cast<std::uint64_t>(t));
    for (int m = 0; m < cfg.samples; ++m) {
      rows[static_cast<std::size_t>(m)] =
          spge_sample_grad(e, theta, step_rng.stream(static_cast<std::uint64_t>(m)));
    }
    const std::vector<double> mean = detail::pairwise_mean(rows);
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += cfg.eta * mean[k];
    out.trajectory.push_back({t, theta, detail::l2_norm(mean)});
  }
  out.theta = std::move(theta);
  return out;
}

}  // namespace spge
