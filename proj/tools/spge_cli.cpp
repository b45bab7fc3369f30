// Command-line driver for the smoothness-aware gradient toolchain.
//
// Subcommands:
//   analyze   run the parametric smoothness analysis on one program
//   select    choose which name strings to reparameterise
//   estimate  Monte-Carlo gradient of the objective at a fixed parameter point
//   train     stochastic gradient ascent on the objective, trajectory as CSV
//   check     run the density and analysis invariant suite on given programs
//
// Exit codes: 0 success, 1 bad input (flags, files, program text), 2 failure
// while evaluating, 3 infeasible selection.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spge/analysis.hpp"
#include "spge/density.hpp"
#include "spge/estimate.hpp"
#include "spge/parse.hpp"
#include "spge/reparam.hpp"
#include "spge/select.hpp"

using json = nlohmann::ordered_json;
using namespace spge;

namespace {

constexpr const char* kInterchangeNote =
    "assumes the gradient of the objective may be exchanged with the expectation "
    "over draws; this interchange is NOT verified by the analysis";

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_out(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open output file: " + out_path);
  f << text;
}

Property parse_prop(const std::string& s) {
  return s == "lip" ? Property::Lipschitz : Property::Differentiable;
}

std::string var_label(const Universe& u, std::size_t idx) {
  if (idx == u.index_like()) return "like";
  const std::size_t names_end = 1 + 4 * u.name_count();
  if (idx < names_end) {
    const std::size_t rel = idx - 1;
    const Name n = u.name_at(rel / 4);
    static const char* kCell[] = {"name", "pr", "val", "cnt"};
    return std::string(kCell[rel % 4]) + "(" + n.str + "," + std::to_string(n.index) + ")";
  }
  return u.params()[idx - names_end];
}

json varset_labels(const VarSet& s, const Universe& u) {
  json arr = json::array();
  s.for_each([&](std::size_t idx) { arr.push_back(var_label(u, idx)); });
  return arr;
}

// The smooth kernel of one program: the likelihood row intersected with every
// prior row. Name strings and parameters inside it are "smooth" for the run.
VarSet single_kernel(const AbsTriple& t, const Universe& u) {
  VarSet k = t.p[u.index_like()];
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) k &= t.p[2 + 4 * slot];
  return k;
}

std::vector<std::string> smooth_strings(const VarSet& kernel, const Universe& u) {
  std::vector<std::string> out;
  for (const std::string& str : u.name_strings()) {
    bool all = true;
    for (int i = 0; i < u.name_bound() && all; ++i) {
      all = kernel.test(u.index_name_val(Name{str, i}));
    }
    if (all) out.push_back(str);
  }
  return out;
}

std::vector<std::string> smooth_params(const VarSet& kernel, const Universe& u,
                                       std::size_t n_theta) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n_theta; ++i) {
    if (kernel.test(u.index_param(u.params()[i]))) out.push_back(u.params()[i]);
  }
  return out;
}

// Plan input: the literals "full" and "empty", or a JSON file with the shape
// {"selected": ["z1", ...], "rules": ["normal-standardise"]}.
ReparamPlan load_plan(const std::string& value) {
  if (value == "full") return default_plan();
  if (value == "empty") return empty_plan();
  std::ifstream f(value);
  if (!f) throw std::invalid_argument("cannot open plan file: " + value);
  const json doc = json::parse(f);
  ReparamPlan plan;
  plan.select_all = false;
  for (const auto& s : doc.at("selected")) plan.selected.insert(s.get<std::string>());
  for (const auto& r : doc.at("rules")) {
    const std::string name = r.get<std::string>();
    if (name != "normal-standardise") {
      throw std::invalid_argument("unknown rewrite rule in plan file: " + name);
    }
  }
  if (!doc.at("rules").empty()) plan.rules.push_back(normal_standardise_rule());
  return plan;
}

json plan_json(const ReparamPlan& plan, const Universe& u) {
  std::vector<std::string> selected;
  if (plan.select_all) {
    selected = u.name_strings();
  } else {
    selected.assign(plan.selected.begin(), plan.selected.end());
  }
  std::set<std::string> rules;
  for (const RewriteRule& r : plan.rules) rules.insert(r.name);
  json out;
  out["selected"] = selected;
  out["rules"] = rules.empty() ? json::array() : json(rules);
  return out;
}

struct CommonOpts {
  std::string prop = "diff";
  int name_bound = kDefaultNameBound;
  std::int64_t budget = kDefaultBudget;
  std::uint64_t seed = 0;
  int jobs = 1;  // reserved; results are independent of the worker count
  std::string out_path;
};

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

int cmd_analyze(const std::string& path, const CommonOpts& o, bool no_intervals) {
  const Program prog = parse_program_file(path);
  const Universe u = Universe::from_programs({prog.body}, prog.params, o.name_bound);
  const Property prop = parse_prop(o.prop);
  const AbsTriple t = abstract_exec(prog.body, u, prop, !no_intervals);
  const VarSet kernel = single_kernel(t, u);

  json rep;
  rep["program"] = path;
  rep["property"] = o.prop == "lip" ? "local-lipschitz" : "differentiable";
  rep["interval_refinement"] = !no_intervals;
  json vars = json::array();
  for (std::size_t v = 0; v < u.size(); ++v) {
    json row;
    row["var"] = var_label(u, v);
    row["p"] = varset_labels(t.p[v], u);
    row["d"] = varset_labels(t.d[v], u);
    vars.push_back(std::move(row));
  }
  rep["variables"] = std::move(vars);
  rep["may_jump"] = varset_labels(t.V, u);
  rep["smooth_names"] = smooth_strings(kernel, u);
  rep["smooth_params"] = smooth_params(kernel, u, prog.params.size());
  write_out(rep.dump(2) + "\n", o.out_path);
  return 0;
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

int cmd_select(const std::string& model_path, const std::string& guide_path,
               const CommonOpts& o, const std::string& plan_out) {
  const Program model = parse_program_file(model_path);
  const Program guide = parse_program_file(guide_path);
  const Universe u =
      Universe::from_programs({model.body, guide.body}, guide.params, o.name_bound);
  const Property prop = parse_prop(o.prop);
  const std::size_t n_theta = guide.params.size();
  const SelectionResult r =
      select_variables(model.body, guide.body, default_plan(), prop, u, n_theta);

  json rep;
  rep["model"] = model_path;
  rep["guide"] = guide_path;
  rep["property"] = o.prop == "lip" ? "local-lipschitz" : "differentiable";
  rep["result"] = r.kind == SelectionResult::Kind::Plan ? "plan" : "infeasible";
  rep["analysis_calls"] = r.analysis_calls;
  rep["candidates"] = r.candidates;

  json checks;
  {
    json feas;
    feas["pass"] = r.kind != SelectionResult::Kind::Infeasible;
    feas["kernel_names"] = smooth_strings(r.kernel, u);
    feas["kernel_params"] = smooth_params(r.kernel, u, n_theta);
    json missing = json::array();
    for (std::size_t i = 0; i < n_theta; ++i) {
      if (!r.kernel.test(u.index_param(u.params()[i]))) missing.push_back(u.params()[i]);
    }
    feas["missing_params"] = std::move(missing);
    checks["feasibility"] = std::move(feas);
  }
  if (r.kind == SelectionResult::Kind::Plan) {
    json rew;
    if (r.plan.selected.empty() && !r.plan.select_all) {
      rew["pass"] = true;
      rew["vacuous"] = true;  // nothing is rewritten, so there is nothing to check
    } else {
      const AbsTriple tbar = abstract_exec(transform(guide.body, r.plan), u, prop);
      rew["pass"] = detail::rewritten_guide_ok(tbar, u, n_theta);
      json smooth = json::array();
      for (std::size_t i = 0; i < n_theta; ++i) {
        bool ok = true;
        for (std::size_t slot = 0; slot < u.name_count() && ok; ++slot) {
          const std::size_t p = u.index_param(u.params()[i]);
          ok = tbar.p[2 + 4 * slot].test(p) && tbar.p[3 + 4 * slot].test(p);
        }
        if (ok) smooth.push_back(u.params()[i]);
      }
      rew["params_smooth_in_rewritten_guide"] = std::move(smooth);
    }
    checks["rewritten_guide"] = std::move(rew);
    rep["selected"] = r.plan.selected;
    rep["plan"] = plan_json(r.plan, u);
  } else {
    rep["reason"] = r.reason;
  }
  rep["checks"] = std::move(checks);
  write_out(rep.dump(2) + "\n", o.out_path);

  if (r.kind == SelectionResult::Kind::Infeasible) return 3;
  if (!plan_out.empty()) {
    std::ofstream f(plan_out, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open plan output file: " + plan_out);
    f << plan_json(r.plan, u).dump(2) + "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

int cmd_estimate(const std::string& model_path, const std::string& guide_path,
                 const CommonOpts& o, const std::string& plan_value,
                 const std::vector<double>& theta, int samples, bool oracle,
                 int oracle_points) {
  const Program model = parse_program_file(model_path);
  const Program guide = parse_program_file(guide_path);
  const Universe u =
      Universe::from_programs({model.body, guide.body}, guide.params, o.name_bound);
  const std::size_t n_theta = guide.params.size();
  if (theta.size() != n_theta) {
    throw std::invalid_argument("expected " + std::to_string(n_theta) +
                                " values for --theta, got " + std::to_string(theta.size()));
  }
  const ReparamPlan plan = load_plan(plan_value);
  const Estimator e = make_estimator(model.body, guide.body, plan, u, n_theta, o.budget);
  const GradEstimate g = mc_grad(e, theta, samples, o.seed);

  json rep;
  rep["model"] = model_path;
  rep["guide"] = guide_path;
  rep["plan"] = plan_json(plan, u);
  rep["theta"] = theta;
  rep["samples"] = g.samples;
  rep["seed"] = g.seed;
  rep["gradient"] = g.grad;
  rep["se"] = g.se;
  rep["assumption"] = kInterchangeNote;
  if (oracle) {
    json orc;
    try {
      QuadratureSpec spec;
      spec.points_per_axis = oracle_points;
      const ElboEstimate ref =
          elbo_quadrature(model.body, guide.body, u, theta, spec, o.budget);
      orc["available"] = true;
      orc["gradient"] = ref.grad;
      orc["objective"] = ref.value;
      orc["points_per_axis"] = oracle_points;
      orc["range"] = {spec.lo, spec.hi};
      json ratios = json::array();
      double worst = 0.0;
      for (std::size_t k = 0; k < g.grad.size(); ++k) {
        if (g.se[k] > 0.0) {
          const double ratio = std::abs(g.grad[k] - ref.grad[k]) / g.se[k];
          worst = std::max(worst, ratio);
          ratios.push_back(ratio);
        } else {
          ratios.push_back(nullptr);
        }
      }
      orc["bias_over_se"] = std::move(ratios);
      orc["max_bias_over_se"] = worst;
    } catch (const TooManyNamesError& ex) {
      orc["available"] = false;
      orc["note"] = ex.what();
    }
    rep["oracle"] = std::move(orc);
  }
  write_out(rep.dump(2) + "\n", o.out_path);
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& model_path, const std::string& guide_path,
              const CommonOpts& o, const std::string& plan_value,
              std::vector<double> theta0, double eta, int steps, int samples) {
  const Program model = parse_program_file(model_path);
  const Program guide = parse_program_file(guide_path);
  const Universe u =
      Universe::from_programs({model.body, guide.body}, guide.params, o.name_bound);
  const std::size_t n_theta = guide.params.size();
  if (theta0.empty()) theta0.assign(n_theta, 0.0);
  if (theta0.size() != n_theta) {
    throw std::invalid_argument("expected " + std::to_string(n_theta) +
                                " values for --theta0, got " + std::to_string(theta0.size()));
  }
  const ReparamPlan plan = load_plan(plan_value);
  const Estimator e = make_estimator(model.body, guide.body, plan, u, n_theta, o.budget);
  SviConfig cfg;
  cfg.eta = eta;
  cfg.steps = steps;
  cfg.samples = samples;
  cfg.seed = o.seed;
  const SviResult res = svi(e, theta0, cfg);

  std::string csv;
  csv += "# gradient ascent trajectory\n";
  csv += std::string("# ") + kInterchangeNote + "\n";
  csv += "step";
  for (std::size_t i = 0; i < n_theta; ++i) csv += "," + u.params()[i];
  csv += ",grad_norm,seed\n";
  for (const SviRow& row : res.trajectory) {
    csv += std::to_string(row.step);
    for (const double v : row.theta) csv += "," + fmt17(v);
    csv += "," + fmt17(row.grad_norm);
    csv += "," + std::to_string(res.seed) + "\n";
  }
  write_out(csv, o.out_path);
  return 0;
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

enum class EvalStatus { Ok, Diverged, Zero };

template <class F>
std::pair<EvalStatus, double> eval_guarded(F&& f) {
  try {
    return {EvalStatus::Ok, f()};
  } catch (const DivergedError&) {
    return {EvalStatus::Diverged, 0.0};
  } catch (const ZeroDensityError&) {
    return {EvalStatus::Zero, 0.0};
  }
}

bool close(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

int cmd_check(const std::vector<std::string>& paths, const CommonOpts& o, int trials) {
  json rep;
  rep["seed"] = o.seed;
  rep["trials"] = trials;
  json programs = json::array();
  bool all_pass = true;

  for (const std::string& path : paths) {
    const Program prog = parse_program_file(path);
    const Universe u = Universe::from_programs({prog.body}, prog.params, o.name_bound);
    const Rng root = Rng(o.seed).stream("check");
    json checks = json::array();

    const auto random_vec = [&](Rng& rng, std::size_t n) {
      std::vector<double> v(n);
      for (double& x : v) x = 2.0 * rng.normal();
      return v;
    };

    // Splitting the prior cells over any slot partition leaves the total
    // log density of the partial products unchanged.
    {
      int violations = 0, skipped = 0;
      Rng branch = root.stream("decompose");
      for (int i = 0; i < trials; ++i) {
        Rng rng = branch.stream(static_cast<std::uint64_t>(i));
        const std::vector<double> theta = random_vec(rng, u.params().size());
        const std::vector<double> names = random_vec(rng, u.name_count());
        VarSet s(u.name_count());
        for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
          if (rng.uniform() < 0.5) s.set(slot);
        }
        const VarSet all = VarSet::full(u.name_count());
        const auto part1 = eval_guarded([&] {
          return log_partial_density<double>(prog.body, u, theta, names, s, o.budget);
        });
        const auto part2 = eval_guarded([&] {
          return log_partial_density<double>(prog.body, u, theta, names, ~s, o.budget);
        });
        const auto whole = eval_guarded([&] {
          return log_partial_density<double>(prog.body, u, theta, names, all, o.budget);
        });
        if (part1.first == EvalStatus::Diverged) {
          // Divergence depends only on the run, so every piece must agree.
          if (part2.first != EvalStatus::Diverged || whole.first != EvalStatus::Diverged) {
            ++violations;
          } else {
            ++skipped;
          }
          continue;
        }
        if (part1.first == EvalStatus::Zero || part2.first == EvalStatus::Zero) {
          if (whole.first == EvalStatus::Ok) ++violations;
          else ++skipped;
          continue;
        }
        if (whole.first != EvalStatus::Ok) {
          ++violations;
          continue;
        }
        if (!close(part1.second + part2.second, whole.second)) ++violations;
      }
      json c;
      c["name"] = "density-decomposition";
      c["trials"] = trials;
      c["skipped"] = skipped;
      c["violations"] = violations;
      c["pass"] = violations == 0;
      all_pass = all_pass && violations == 0;
      checks.push_back(std::move(c));
    }

    // Evaluating the kept slots' prior cells on the rewritten program equals
    // evaluating them on the original program at the mapped values.
    {
      int violations = 0, skipped = 0;
      Rng branch = root.stream("value-connection");
      const std::vector<std::string> strings = u.name_strings();
      for (int i = 0; i < trials; ++i) {
        Rng rng = branch.stream(static_cast<std::uint64_t>(i));
        std::set<std::string> chosen;
        for (const std::string& s : strings) {
          if (rng.uniform() < 0.5) chosen.insert(s);
        }
        const ReparamPlan plan = restrict_plan(default_plan(), chosen);
        const CmdPtr rewritten = transform(prog.body, plan);
        const VarSet keep = ~rv_slots(plan, u);
        const std::vector<double> theta = random_vec(rng, u.params().size());
        const std::vector<double> names = random_vec(rng, u.name_count());
        const auto lhs = eval_guarded([&] {
          return log_partial_density<double>(rewritten, u, theta, names, keep, o.budget);
        });
        const auto rhs = eval_guarded([&] {
          const std::vector<double> mapped = value_fn<double>(rewritten, u, theta, names, o.budget);
          return log_partial_density<double>(prog.body, u, theta, mapped, keep, o.budget);
        });
        if (lhs.first != EvalStatus::Ok || rhs.first != EvalStatus::Ok) {
          ++skipped;
          continue;
        }
        if (!close(lhs.second, rhs.second)) ++violations;
      }
      json c;
      c["name"] = "value-connection";
      c["trials"] = trials;
      c["skipped"] = skipped;
      c["violations"] = violations;
      c["pass"] = violations == 0;
      all_pass = all_pass && violations == 0;
      checks.push_back(std::move(c));
    }

    // The analysis triple must be well formed under both smoothness notions.
    {
      int violations = 0;
      for (const Property prop : {Property::Differentiable, Property::Lipschitz}) {
        const AbsTriple t = abstract_exec(prog.body, u, prop);
        for (std::size_t v = 0; v < u.size(); ++v) {
          if (!(~t.d[v]).subset_of(t.p[v])) ++violations;
          if (!t.V.subset_of(t.d[v])) ++violations;
        }
      }
      json c;
      c["name"] = "analysis-well-formed";
      c["trials"] = 2;
      c["violations"] = violations;
      c["pass"] = violations == 0;
      all_pass = all_pass && violations == 0;
      checks.push_back(std::move(c));
    }

    // Sampling runs are a pure function of the seed.
    {
      int violations = 0;
      Rng branch = root.stream("determinism");
      for (int i = 0; i < 10; ++i) {
        Rng rng = branch.stream(static_cast<std::uint64_t>(i));
        const std::vector<double> theta = random_vec(rng, u.params().size());
        const auto run = [&](Rng r) -> std::optional<std::vector<double>> {
          try {
            return exec_sampling(prog.body, u, theta, r, o.budget);
          } catch (const DivergedError&) {
            return std::nullopt;
          } catch (const DoubleSampleError&) {
            return std::nullopt;
          }
        };
        const Rng draw = branch.stream(static_cast<std::uint64_t>(i)).stream("draw");
        const auto a = run(draw);
        const auto b = run(draw);
        if (a.has_value() != b.has_value()) {
          ++violations;
        } else if (a.has_value() && a->size() == b->size()) {
          for (std::size_t k = 0; k < a->size(); ++k) {
            std::uint64_t ba, bb;
            std::memcpy(&ba, &(*a)[k], 8);
            std::memcpy(&bb, &(*b)[k], 8);
            if (ba != bb) {
              ++violations;
              break;
            }
          }
        }
      }
      json c;
      c["name"] = "sampling-determinism";
      c["trials"] = 10;
      c["violations"] = violations;
      c["pass"] = violations == 0;
      all_pass = all_pass && violations == 0;
      checks.push_back(std::move(c));
    }

    json entry;
    entry["program"] = path;
    entry["checks"] = std::move(checks);
    programs.push_back(std::move(entry));
  }

  rep["programs"] = std::move(programs);
  rep["pass"] = all_pass;
  write_out(rep.dump(2) + "\n", o.out_path);
  return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smoothness-aware gradient estimation for a small probabilistic language"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string model_path, guide_path, program_path;
  std::vector<std::string> check_paths;
  std::string plan_value = "full";
  std::string plan_out;
  std::vector<double> theta, theta0;
  int samples = 1000;
  int svi_samples = 16;
  int steps = 2000;
  double eta = 0.05;
  bool oracle = false;
  int oracle_points = 2001;
  bool no_intervals = false;
  int trials = 200;

  const auto add_common = [&](CLI::App* sub, bool with_prop) {
    if (with_prop) {
      sub->add_option("--prop", o.prop, "smoothness notion: diff or lip")
          ->check(CLI::IsMember({"diff", "lip"}));
    }
    sub->add_option("--name-bound", o.name_bound, "slots per name string")
        ->check(CLI::PositiveNumber);
    sub->add_option("--budget", o.budget, "loop step budget")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "root seed for all randomness");
    sub->add_option("--jobs", o.jobs, "reserved; results are independent of the worker count")
        ->check(CLI::PositiveNumber);
    sub->add_option("-o,--out", o.out_path, "write the report here instead of stdout");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "smoothness analysis of one program");
  analyze->add_option("program", program_path, "program file")->required();
  analyze->add_flag("--no-intervals", no_intervals, "disable the range refinement");
  add_common(analyze, true);

  CLI::App* select = app.add_subcommand("select", "choose name strings to reparameterise");
  select->add_option("model", model_path, "model program")->required();
  select->add_option("guide", guide_path, "guide program")->required();
  select->add_option("--plan-out", plan_out, "also write the bare plan file here");
  add_common(select, true);

  CLI::App* estimate = app.add_subcommand("estimate", "Monte-Carlo gradient at one point");
  estimate->add_option("model", model_path, "model program")->required();
  estimate->add_option("guide", guide_path, "guide program")->required();
  estimate->add_option("--plan", plan_value, "plan file, or the literals full / empty");
  estimate->add_option("--theta", theta, "parameter point, comma separated")
      ->required()
      ->delimiter(',');
  estimate->add_option("--samples", samples, "Monte-Carlo sample count")
      ->check(CLI::PositiveNumber);
  estimate->add_flag("--oracle", oracle, "also run the grid quadrature reference");
  estimate->add_option("--oracle-points", oracle_points, "grid points per axis")
      ->check(CLI::Range(2, 100001));
  add_common(estimate, false);

  CLI::App* train = app.add_subcommand("train", "stochastic gradient ascent, CSV trajectory");
  train->add_option("model", model_path, "model program")->required();
  train->add_option("guide", guide_path, "guide program")->required();
  train->add_option("--plan", plan_value, "plan file, or the literals full / empty");
  train->add_option("--theta0", theta0, "initial parameters, comma separated (default zeros)")
      ->delimiter(',');
  train->add_option("--eta", eta, "step size")->check(CLI::NonNegativeNumber);
  train->add_option("--steps", steps, "gradient steps")->check(CLI::NonNegativeNumber);
  train->add_option("--samples", svi_samples, "samples per step")->check(CLI::PositiveNumber);
  add_common(train, false);

  CLI::App* check = app.add_subcommand("check", "density and analysis invariant suite");
  check->add_option("programs", check_paths, "program files")->required()->expected(-1);
  check->add_option("--trials", trials, "random trials per check")->check(CLI::PositiveNumber);
  add_common(check, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*analyze) return cmd_analyze(program_path, o, no_intervals);
    if (*select) return cmd_select(model_path, guide_path, o, plan_out);
    if (*estimate) {
      return cmd_estimate(model_path, guide_path, o, plan_value, theta, samples, oracle,
                          oracle_points);
    }
    if (*train) return cmd_train(model_path, guide_path, o, plan_value, theta0, eta, steps,
                                 svi_samples);
    if (*check) return cmd_check(check_paths, o, trials);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "plan file error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
