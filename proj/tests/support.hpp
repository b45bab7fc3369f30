#pragma once

// Shared test utilities: program loading, frozen oracle constants (computed
// with an independent high-precision implementation and pinned here), and a
// seeded random program generator for the property suites.
//
// This header deliberately avoids any test-framework dependency so both the
// Catch2 suites and the acceptance binary can use it.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spge/ast.hpp"
#include "spge/interp.hpp"
#include "spge/parse.hpp"
#include "spge/rng.hpp"
#include "spge/universe.hpp"

namespace testsupport {

using namespace spge;

// ---------------------------------------------------------------------------
// Frozen oracle constants (independently computed, 17 significant digits)
// ---------------------------------------------------------------------------

// Normal densities N(x; mean, variance).
inline constexpr double kPdf_2_m3_1 = 1.4867195147342977e-06;   // N(2;-3,1)
inline constexpr double kPdf_4_5_1 = 0.24197072451914335;       // N(4;5,1)
inline constexpr double kPdf_0_1_1 = 0.24197072451914335;       // N(0;1,1)
inline constexpr double kPdf_0_m2_1 = 0.053990966513188052;     // N(0;-2,1)
inline constexpr double kPdf_0_0_1 = 0.39894228040143268;       // N(0;0,1)

// The branching model/guide pair: true objective and optimum.
//   L(t1,t2)  = -(1+t1^2)/10 - (2+(t2-t1)^2)/6 + Phi(t2) log N(0;1,1)
//               + (1-Phi(t2)) log N(0;-2,1) - log(2 pi sqrt(15)) + log(2 pi) + 1
//   dL/dt1    = -t1/5 + (t2-t1)/3
//   dL/dt2    = (t1-t2)/3 + 1.5 N(t2;0,1)
inline constexpr double kOptTheta1 = 0.94771970482216714;
inline constexpr double kOptTheta2 = 1.5163515277154675;
inline constexpr double kElboAt_1_2 = -2.5070888316780466;
inline constexpr double kGrad1At_1_2 = 0.13333333333333333;
inline constexpr double kGrad2At_1_2 = -0.25234688356355126;
// Mean of the estimator's second coordinate at theta=(1,2):
inline constexpr double kFullMean2At_1_2 = -1.0 / 3.0;             // all names standardised
inline constexpr double kSelectiveMean2At_1_2 = -0.25234688356355126;  // only z1 standardised

inline double closed_elbo(double t1, double t2) {
  const double phi_t2 = 0.5 * std::erfc(-t2 / std::sqrt(2.0));
  const double lik1 = std::log(kPdf_0_1_1);
  const double lik0 = std::log(kPdf_0_m2_1);
  return -std::log(2 * 3.14159265358979323846 * 5) / 2 - (1 + t1 * t1) / 10 -
         std::log(2 * 3.14159265358979323846 * 3) / 2 - (2 + (t2 - t1) * (t2 - t1)) / 6 +
         phi_t2 * lik1 + (1 - phi_t2) * lik0 + std::log(2 * 3.14159265358979323846) + 1.0;
}

inline std::pair<double, double> closed_elbo_grad(double t1, double t2) {
  const double phi = kPdf_0_0_1 * std::exp(-t2 * t2 / 2);
  return {-t1 / 5 + (t2 - t1) / 3, (t1 - t2) / 3 + 1.5 * phi};
}

// ---------------------------------------------------------------------------
// Program loading
// ---------------------------------------------------------------------------

inline std::string programs_dir() {
#ifdef SPGE_PROGRAMS_DIR
  return SPGE_PROGRAMS_DIR;
#else
  return "programs";
#endif
}

inline Program load_program(const std::string& stem) {
  return parse_program_file(programs_dir() + "/" + stem + ".ppl");
}

// ---------------------------------------------------------------------------
// Bitwise comparison (NaN-safe)
// ---------------------------------------------------------------------------

inline bool same_bits(double a, double b) {
  std::uint64_t ba, bb;
  std::memcpy(&ba, &a, 8);
  std::memcpy(&bb, &b, 8);
  return ba == bb;
}

// ---------------------------------------------------------------------------
// Random program generator
// ---------------------------------------------------------------------------

struct FuzzConfig {
  int max_depth = 4;
  int max_expr_depth = 3;
  bool allow_observe = true;
  bool identity_lambdas_only = false;
  bool allow_while = true;
  int name_bound = 4;
  std::vector<std::string> params = {"a", "b", "u", "w", "x"};
  std::vector<std::string> name_strings = {"m", "n"};
};

class ProgramGen {
 public:
  ProgramGen(Rng rng, FuzzConfig cfg) : rng_(rng), cfg_(std::move(cfg)) {}

  CmdPtr command() { return gen_cmd(cfg_.max_depth); }

  ExprPtr expression() { return gen_expr(cfg_.max_expr_depth); }

  const FuzzConfig& config() const { return cfg_; }

 private:
  double uniform() { return rng_.uniform(); }
  int pick(int n) { return static_cast<int>(rng_.next_u64() % static_cast<std::uint64_t>(n)); }

  Var some_param() { return Var::param(cfg_.params[pick(static_cast<int>(cfg_.params.size()))]); }

  ExprPtr gen_expr(int depth, const Var* binder = nullptr) {
    if (depth <= 0 || uniform() < 0.35) {
      const double r = uniform();
      if (binder != nullptr && r < 0.35) return mk_ref(*binder);
      if (r < 0.6) return mk_ref(some_param());
      // Constants on a small grid keep magnitudes tame.
      return mk_const(std::round((uniform() * 4.0 - 2.0) * 8.0) / 8.0);
    }
    static constexpr Op kOps[] = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Neg,
                                  Op::Exp, Op::Log, Op::Sqrt, Op::Relu, Op::NormalPdf,
                                  Op::Floor, Op::Step, Op::Gxy};
    const Op op = kOps[pick(static_cast<int>(sizeof(kOps) / sizeof(kOps[0])))];
    std::vector<ExprPtr> args;
    for (int i = 0; i < op_info(op).arity; ++i) args.push_back(gen_expr(depth - 1, binder));
    return mk_call(op, std::move(args));
  }

  BoolPtr gen_bool(int depth, const Var* binder = nullptr) {
    const double r = uniform();
    if (depth <= 0 || r < 0.6) return mk_less(gen_expr(1, binder), gen_expr(1, binder));
    if (r < 0.75) return mk_not(gen_bool(depth - 1, binder));
    if (r < 0.9) return mk_and(gen_bool(depth - 1, binder), gen_bool(depth - 1, binder));
    return mk_true();
  }

  Lambda gen_lambda() {
    const Var binder = Var::param("$g" + std::to_string(binder_counter_++));
    if (cfg_.identity_lambdas_only || uniform() < 0.6) return Lambda{binder, mk_ref(binder)};
    return Lambda{binder, gen_expr(2, &binder)};
  }

  CmdPtr gen_sample() {
    const std::string& s = cfg_.name_strings[pick(static_cast<int>(cfg_.name_strings.size()))];
    ExprPtr idx = uniform() < 0.6 ? mk_const(static_cast<double>(pick(cfg_.name_bound)))
                                  : ExprPtr(mk_ref(some_param()));
    DistExpr d{gen_expr(1), gen_expr(1)};
    return mk_sample(some_param(), NameExpr{s, std::move(idx)}, std::move(d), gen_lambda());
  }

  CmdPtr gen_cmd(int depth) {
    const double r = uniform();
    if (depth <= 0 || r < 0.3) {
      if (r < 0.04) return mk_skip();
      return mk_assign(some_param(), gen_expr(cfg_.max_expr_depth));
    }
    if (r < 0.5) return mk_seq(gen_cmd(depth - 1), gen_cmd(depth - 1));
    if (r < 0.62) return mk_if(gen_bool(2), gen_cmd(depth - 1), gen_cmd(depth - 1));
    if (cfg_.allow_while && r < 0.7) {
      // Bounded counter loop; the counter is reserved for loops only, so the
      // body cannot interfere with termination.
      const Var t = Var::param("t" + std::to_string(depth));
      const int bound = pick(4);
      CmdPtr body = mk_seq(mk_assign(t, mk_call(Op::Add, {mk_ref(t), mk_const(1.0)})),
                           gen_cmd(depth - 1));
      return mk_seq(mk_assign(t, mk_const(0.0)),
                    mk_while(mk_less(mk_ref(t), mk_const(static_cast<double>(bound))), body));
    }
    if (cfg_.allow_observe && r < 0.78) {
      return mk_observe(DistExpr{gen_expr(1), gen_expr(1)},
                        std::round((uniform() * 4.0 - 2.0) * 8.0) / 8.0);
    }
    return gen_sample();
  }

  Rng rng_;
  FuzzConfig cfg_;
  int binder_counter_ = 0;
};

// The universe spanned by a generated program, including the loop counters
// and every pool parameter (so distinct programs from one pool are
// comparable).
inline Universe fuzz_universe(const CmdPtr& program, const FuzzConfig& cfg) {
  const Universe base = Universe::from_programs({program}, {}, cfg.name_bound);
  std::vector<std::string> strings = base.name_strings();
  strings.insert(strings.end(), cfg.name_strings.begin(), cfg.name_strings.end());
  std::vector<std::string> params = cfg.params;
  for (int d = 0; d <= 16; ++d) params.push_back("t" + std::to_string(d));
  params.insert(params.end(), base.params().begin(), base.params().end());
  return Universe(std::move(strings), std::move(params), cfg.name_bound);
}

// A random store over `u`, with positive likelihood and pr cells and small
// integer draw counters (the shape execution itself would maintain).
inline State<double> random_state(const Universe& u, Rng& rng) {
  State<double> st(u.size());
  for (double& x : st) x = 2.0 * rng.normal();
  st[u.index_like()] = std::abs(st[u.index_like()]) + 0.25;
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    st[2 + 4 * slot] = std::abs(st[2 + 4 * slot]) + 0.1;
    st[4 + 4 * slot] = static_cast<double>(rng.next_u64() % 2);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Numeric helpers
// ---------------------------------------------------------------------------

inline double pairwise_sum(const double* xs, std::size_t n) {
  if (n == 0) return 0.0;
  if (n == 1) return xs[0];
  const std::size_t half = n / 2;
  return pairwise_sum(xs, half) + pairwise_sum(xs + half, n - half);
}

inline double mean(const std::vector<double>& xs) {
  return pairwise_sum(xs.data(), xs.size()) / static_cast<double>(xs.size());
}

inline double stddev(const std::vector<double>& xs) {
  const double m = mean(xs);
  double acc = 0.0;
  for (const double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / (static_cast<double>(xs.size()) - 1.0));
}

}  // namespace testsupport
