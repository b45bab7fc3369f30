// Concrete execution: density semantics, sampling semantics, totalising
// defaults, budget accounting, and dual-number consistency.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spge/interp.hpp"
#include "spge/parse.hpp"
#include "support.hpp"

using namespace spge;
using Catch::Approx;
using testsupport::same_bits;

namespace {

// Runs `text` in density semantics over its own universe, with every cell
// zeroed except like=1 and the given name assignments.
struct RunResult {
  Universe u;
  State<double> st;
  ExecStatus status;
};

RunResult run_density(const std::string& text,
                      const std::vector<std::pair<Name, double>>& names = {},
                      int name_bound = kDefaultNameBound,
                      std::int64_t budget = kDefaultBudget) {
  const CmdPtr c = parse_command(text);
  Universe u = Universe::from_programs({c}, {}, name_bound);
  State<double> st(u.size(), 0.0);
  st[u.index_like()] = 1.0;
  for (const auto& [n, v] : names) st[u.index_name_val(n)] = v;
  const ExecStatus status = exec(c, u, st, budget);
  return RunResult{std::move(u), std::move(st), status};
}

}  // namespace

TEST_CASE("sampling against a fixed store scores and records") {
  // Two draws read off the store: (a,0) holds 2, (b,0) holds 4.
  auto r = run_density(
      "x := sam(a, N(-3, 1), lam y. y); y := sam(b, N(5, 1), lam w. w)",
      {{Name{"a", 0}, 2.0}, {Name{"b", 0}, 4.0}});
  REQUIRE(r.status == ExecStatus::Ok);
  const Universe& u = r.u;
  CHECK(r.st[u.index_param("x")] == 2.0);
  CHECK(r.st[u.index_param("y")] == 4.0);
  CHECK(r.st[u.index_val(Name{"a", 0})] == 2.0);
  CHECK(r.st[u.index_val(Name{"b", 0})] == 4.0);
  CHECK(r.st[u.index_pr(Name{"a", 0})] == Approx(testsupport::kPdf_2_m3_1).epsilon(1e-14));
  CHECK(r.st[u.index_pr(Name{"b", 0})] == Approx(testsupport::kPdf_4_5_1).epsilon(1e-14));
  CHECK(r.st[u.index_cnt(Name{"a", 0})] == 1.0);
  CHECK(r.st[u.index_cnt(Name{"b", 0})] == 1.0);
  // Untouched cells stay put.
  CHECK(r.st[u.index_like()] == 1.0);
  CHECK(r.st[u.index_name_val(Name{"a", 0})] == 2.0);
  CHECK(r.st[u.index_cnt(Name{"a", 1})] == 0.0);
}

TEST_CASE("the prior scores the raw value, the lambda maps it") {
  auto r = run_density("x := sam(a, N(0, 1), lam y. y + 10)", {{Name{"a", 0}, 0.5}});
  REQUIRE(r.status == ExecStatus::Ok);
  CHECK(r.st[r.u.index_param("x")] == 10.5);
  CHECK(r.st[r.u.index_val(Name{"a", 0})] == 10.5);
  // Scored at the raw 0.5, not at the mapped 10.5.
  const double expected = normal_pdf(0.5, 0.0, 1.0);
  CHECK(r.st[r.u.index_pr(Name{"a", 0})] == expected);
  CHECK(r.st[r.u.index_name_val(Name{"a", 0})] == 0.5);
}

TEST_CASE("observation multiplies the likelihood") {
  auto r = run_density("obs(N(1, 1), 0)");
  REQUIRE(r.status == ExecStatus::Ok);
  CHECK(r.st[r.u.index_like()] == Approx(testsupport::kPdf_0_1_1).epsilon(1e-14));

  auto r2 = run_density("obs(N(1, 1), 0); obs(N(-2, 1), 0)");
  CHECK(r2.st[r2.u.index_like()] ==
        Approx(testsupport::kPdf_0_1_1 * testsupport::kPdf_0_m2_1).epsilon(1e-14));
}

TEST_CASE("branching reads the store") {
  const Program model = testsupport::load_program("fig1_model");
  Universe u = Universe::from_programs({model.body}, {}, kDefaultNameBound);

  State<double> st(u.size(), 0.0);
  st[u.index_like()] = 1.0;
  st[u.index_name_val(Name{"z1", 0})] = 0.3;
  st[u.index_name_val(Name{"z2", 0})] = 1.7;
  REQUIRE(exec(model.body, u, st) == ExecStatus::Ok);
  // x2 = 1.7 > 0, so the first observation fires.
  CHECK(st[u.index_like()] == Approx(testsupport::kPdf_0_1_1).epsilon(1e-14));
  CHECK(st[u.index_pr(Name{"z2", 0})] == Approx(normal_pdf(1.7, 0.3, 3.0)).epsilon(1e-14));

  State<double> st2(u.size(), 0.0);
  st2[u.index_like()] = 1.0;
  st2[u.index_name_val(Name{"z2", 0})] = -0.2;
  REQUIRE(exec(model.body, u, st2) == ExecStatus::Ok);
  CHECK(st2[u.index_like()] == Approx(testsupport::kPdf_0_m2_1).epsilon(1e-14));
}

TEST_CASE("totalising defaults") {
  SECTION("non-positive variance scores as unit variance") {
    auto r = run_density("x := sam(a, N(0, -2), lam y. y)", {{Name{"a", 0}, 0.5}});
    CHECK(r.st[r.u.index_pr(Name{"a", 0})] == normal_pdf(0.5, 0.0, 1.0));
  }
  SECTION("expression defaults") {
    auto r = run_density("p := sqrt(-4); q := log(-1); s := log(0); t := 1 / 0; v := 3 / 2");
    CHECK(r.st[r.u.index_param("p")] == 1.0);
    CHECK(r.st[r.u.index_param("q")] == kLogFloor);
    CHECK(r.st[r.u.index_param("s")] == kLogFloor);
    CHECK(r.st[r.u.index_param("t")] == 0.0);
    CHECK(r.st[r.u.index_param("v")] == 1.5);
  }
  SECTION("gxy is zero at the origin and asymmetric along axes") {
    const double at_origin[2] = {0.0, 0.0};
    CHECK(op_value(Op::Gxy, at_origin) == 0.0);
    const double on_diag[2] = {1.0, 1.0};
    CHECK(op_value(Op::Gxy, on_diag) == 0.5);
  }
}

TEST_CASE("step budget accounting") {
  // One charge per executed non-sequencing node, one per loop check.
  const std::string prog = "t := 0; while t < 3 { t := t + 1 }";
  CHECK(run_density(prog, {}, kDefaultNameBound, 8).status == ExecStatus::Ok);
  CHECK(run_density(prog, {}, kDefaultNameBound, 7).status == ExecStatus::Diverged);
  CHECK(run_density("while true { skip }", {}, kDefaultNameBound, 1000).status ==
        ExecStatus::Diverged);
  CHECK(run_density("skip", {}, kDefaultNameBound, 1).status == ExecStatus::Ok);
  CHECK(run_density("skip", {}, kDefaultNameBound, 0).status == ExecStatus::Diverged);
}

TEST_CASE("name creation floors and clamps") {
  CHECK(create_name("z", -3.7, 16) == Name{"z", 0});
  CHECK(create_name("z", 3.7, 16) == Name{"z", 3});
  CHECK(create_name("z", 99.0, 16) == Name{"z", 15});
  CHECK(create_name("z", 15.999, 16) == Name{"z", 15});
  CHECK(create_name("z", std::nan(""), 16) == Name{"z", 0});
  CHECK(create_name("z", -0.0, 16) == Name{"z", 0});

  auto r = run_density("i := 5; x := sam(name(m, i * 2), N(0, 1), lam y. y)", {}, 4);
  CHECK(r.st[r.u.index_cnt(Name{"m", 3})] == 1.0);
  CHECK(r.st[r.u.index_cnt(Name{"m", 0})] == 0.0);
}

TEST_CASE("no-double-sampling checker") {
  const Program model = testsupport::load_program("fig1_model");
  Universe u = Universe::from_programs({model.body}, {}, kDefaultNameBound);
  CHECK(check_no_double_sampling(model.body, u, 50, Rng(7)));

  const CmdPtr bad = parse_command(
      "x := sam(m, N(0, 1), lam y. y); x := sam(m, N(0, 1), lam y. y)");
  Universe ub = Universe::from_programs({bad}, {}, kDefaultNameBound);
  CHECK_FALSE(check_no_double_sampling(bad, ub, 50, Rng(7)));

  // A loop that lands each draw on a distinct index is fine.
  const CmdPtr loop = parse_command(
      "i := 0; while i < 3 { x := sam(name(m, i), N(0, 1), lam y. y); i := i + 1 }");
  Universe ul = Universe::from_programs({loop}, {}, kDefaultNameBound);
  CHECK(check_no_double_sampling(loop, ul, 50, Rng(7)));
}

TEST_CASE("execution invariants on a generated corpus") {
  Rng rng(0x51AB17ull);
  testsupport::FuzzConfig cfg;
  int executed = 0;
  for (int i = 0; i < 1000; ++i) {
    testsupport::ProgramGen gen(rng.stream(static_cast<std::uint64_t>(i)), cfg);
    const CmdPtr c = gen.command();
    const Universe u = testsupport::fuzz_universe(c, cfg);
    Rng state_rng = rng.stream(0x1000u + static_cast<std::uint64_t>(i));
    for (int k = 0; k < 20; ++k) {
      State<double> before = testsupport::random_state(u, state_rng);
      State<double> after = before;
      if (exec(c, u, after) == ExecStatus::Diverged) continue;
      ++executed;
      for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
        const Name n = u.name_at(slot);
        // Draw counters never decrease; raw name values never change.
        REQUIRE(after[u.index_cnt(n)] >= before[u.index_cnt(n)]);
        REQUIRE(same_bits(after[u.index_name_val(n)], before[u.index_name_val(n)]));
      }
    }
  }
  // The corpus must actually exercise the interpreter.
  REQUIRE(executed > 15000);
}

TEST_CASE("likelihood updates scale linearly in the initial likelihood") {
  Rng rng(0xF00DF00Dull);
  testsupport::FuzzConfig cfg;
  for (int i = 0; i < 300; ++i) {
    testsupport::ProgramGen gen(rng.stream(static_cast<std::uint64_t>(i)), cfg);
    const CmdPtr c = gen.command();
    const Universe u = testsupport::fuzz_universe(c, cfg);
    Rng state_rng = rng.stream(0x2000u + static_cast<std::uint64_t>(i));
    for (int k = 0; k < 5; ++k) {
      State<double> base = testsupport::random_state(u, state_rng);
      State<double> unit = base;
      unit[u.index_like()] = 1.0;
      State<double> scaled = base;
      if (exec(c, u, unit) == ExecStatus::Diverged) continue;
      REQUIRE(exec(c, u, scaled) == ExecStatus::Ok);
      const double expected = base[u.index_like()] * unit[u.index_like()];
      if (expected == 0.0) {
        CHECK(scaled[u.index_like()] == 0.0);
      } else {
        CHECK(scaled[u.index_like()] == Approx(expected).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("observation-free programs leave the likelihood alone") {
  Rng rng(0xCAFEull);
  testsupport::FuzzConfig cfg;
  cfg.allow_observe = false;
  for (int i = 0; i < 300; ++i) {
    testsupport::ProgramGen gen(rng.stream(static_cast<std::uint64_t>(i)), cfg);
    const CmdPtr c = gen.command();
    REQUIRE_FALSE(contains_observe(c));
    const Universe u = testsupport::fuzz_universe(c, cfg);
    Rng state_rng = rng.stream(0x3000u + static_cast<std::uint64_t>(i));
    for (int k = 0; k < 5; ++k) {
      State<double> st = testsupport::random_state(u, state_rng);
      const double like_before = st[u.index_like()];
      if (exec(c, u, st) == ExecStatus::Diverged) continue;
      REQUIRE(same_bits(st[u.index_like()], like_before));
    }
  }
}

TEST_CASE("sampling semantics is reproducible and guarded") {
  const Program guide = testsupport::load_program("fig1_guide");
  Universe u = Universe::from_programs({guide.body}, guide.params, kDefaultNameBound);
  const std::vector<double> theta = {1.0, 2.0};

  SECTION("same seed, same draws, bit for bit") {
    const auto a = exec_sampling(guide.body, u, theta, Rng(42).stream("draws"));
    const auto b = exec_sampling(guide.body, u, theta, Rng(42).stream("draws"));
    REQUIRE(a.size() == u.name_count());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(same_bits(a[i], b[i]));
    const auto other = exec_sampling(guide.body, u, theta, Rng(43).stream("draws"));
    CHECK_FALSE(same_bits(a[u.name_slot(Name{"z1", 0})], other[u.name_slot(Name{"z1", 0})]));
  }

  SECTION("draws follow the stated distributions") {
    const int n = 10000;
    std::vector<double> z1s(n), fills(n);
    const std::size_t z1 = u.name_slot(Name{"z1", 0});
    const std::size_t unused = u.name_slot(Name{"z1", 5});
    Rng rng(2024);
    for (int i = 0; i < n; ++i) {
      const auto names = exec_sampling(guide.body, u, theta, rng.stream(static_cast<std::uint64_t>(i)));
      z1s[i] = names[z1];
      fills[i] = names[unused];
    }
    // z1 is drawn from N(theta1, 1); unused slots are filled from N(0, 1).
    CHECK(std::abs(testsupport::mean(z1s) - 1.0) < 0.04);
    CHECK(std::abs(testsupport::stddev(z1s) - 1.0) < 0.03);
    CHECK(std::abs(testsupport::mean(fills)) < 0.04);
    CHECK(std::abs(testsupport::stddev(fills) - 1.0) < 0.03);
  }

  SECTION("re-sampling a name is an error") {
    const CmdPtr bad = parse_command(
        "x := sam(m, N(0, 1), lam y. y); x := sam(m, N(0, 1), lam y. y)");
    Universe ub = Universe::from_programs({bad}, {}, kDefaultNameBound);
    CHECK_THROWS_AS(exec_sampling(bad, ub, {}, Rng(1)), DoubleSampleError);
  }

  SECTION("budget exhaustion throws") {
    const CmdPtr spin = parse_command("while true { skip }");
    Universe us = Universe::from_programs({spin}, {}, kDefaultNameBound);
    CHECK_THROWS_AS(exec_sampling(spin, us, {}, Rng(1), 1000), DivergedError);
  }

  SECTION("a density replay at the drawn values reproduces the run") {
    const auto names = exec_sampling(guide.body, u, theta, Rng(9).stream("replay"));
    State<double> st(u.size(), 0.0);
    st[u.index_like()] = 1.0;
    for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
      st[u.index_name_val(u.name_at(slot))] = names[slot];
    }
    st[u.index_param("theta1")] = theta[0];
    st[u.index_param("theta2")] = theta[1];
    REQUIRE(exec(guide.body, u, st) == ExecStatus::Ok);
    CHECK(st[u.index_param("x1")] == names[u.name_slot(Name{"z1", 0})]);
    CHECK(st[u.index_param("x2")] == names[u.name_slot(Name{"z2", 0})]);
    CHECK(st[u.index_pr(Name{"z1", 0})] ==
          normal_pdf(names[u.name_slot(Name{"z1", 0})], 1.0, 1.0));
  }
}

TEST_CASE("dual evaluation matches finite differences per operator") {
  struct Point {
    Op op;
    double args[3];
    int arity;
  };
  const Point points[] = {
      {Op::Add, {0.7, -1.3, 0}, 2},    {Op::Sub, {2.5, 0.4, 0}, 2},
      {Op::Mul, {-1.2, 3.1, 0}, 2},    {Op::Div, {1.7, -2.2, 0}, 2},
      {Op::Neg, {0.9, 0, 0}, 1},       {Op::Exp, {-0.3, 0, 0}, 1},
      {Op::Log, {2.4, 0, 0}, 1},       {Op::Sqrt, {3.6, 0, 0}, 1},
      {Op::Relu, {1.4, 0, 0}, 1},      {Op::Relu, {-1.4, 0, 0}, 1},
      {Op::Floor, {2.3, 0, 0}, 1},     {Op::Step, {0.8, 0, 0}, 1},
      {Op::Gxy, {0.8, -0.5, 0}, 2},    {Op::NormalPdf, {0.4, -0.2, 1.7}, 3},
  };
  const double h = 1e-6;
  for (const Point& pt : points) {
    Dual dargs[3];
    for (int i = 0; i < pt.arity; ++i) {
      dargs[i] = Dual::seeded(pt.args[i], static_cast<std::size_t>(i),
                              static_cast<std::size_t>(pt.arity));
    }
    const Dual out = apply_op(pt.op, dargs, static_cast<std::size_t>(pt.arity));
    CHECK(out.val == op_value(pt.op, pt.args));
    for (int i = 0; i < pt.arity; ++i) {
      double lo[3] = {pt.args[0], pt.args[1], pt.args[2]};
      double hi[3] = {pt.args[0], pt.args[1], pt.args[2]};
      lo[i] -= h;
      hi[i] += h;
      const double fd = (op_value(pt.op, hi) - op_value(pt.op, lo)) / (2 * h);
      INFO("op " << op_info(pt.op).name << " arg " << i);
      CHECK(out.dot[static_cast<std::size_t>(i)] ==
            Approx(fd).margin(1e-5 * (1.0 + std::abs(fd))));
    }
  }
}

TEST_CASE("dual slopes vanish inside default regions") {
  const auto slope_of = [](Op op, std::initializer_list<double> args) {
    Dual d[3];
    std::size_t i = 0;
    for (double a : args) d[i++] = Dual::seeded(a, 0, 1);  // all slopes on coord 0
    return apply_op(op, d, args.size()).dot[0];
  };
  CHECK(slope_of(Op::Sqrt, {-2.0}) == 0.0);
  CHECK(slope_of(Op::Log, {-1.0}) == 0.0);
  CHECK(slope_of(Op::Div, {1.0, 0.0}) == 0.0);
  CHECK(slope_of(Op::Step, {0.5}) == 0.0);
  CHECK(slope_of(Op::Floor, {0.5}) == 0.0);
  // Defaulted variance: the variance partial is zero, the value partials are not.
  Dual d[3] = {Dual::seeded(0.4, 0, 3), Dual::seeded(0.1, 1, 3), Dual::seeded(-2.0, 2, 3)};
  const Dual out = apply_op(Op::NormalPdf, d, 3);
  CHECK(out.val == normal_pdf(0.4, 0.1, 1.0));
  CHECK(out.dot[0] != 0.0);
  CHECK(out.dot[2] == 0.0);
}

TEST_CASE("dual execution of a whole program matches finite differences") {
  const Program guide = testsupport::load_program("fig1_guide");
  Universe u = Universe::from_programs({guide.body}, guide.params, kDefaultNameBound);
  const double z1 = 0.37, z2 = -1.24;
  const double t1 = 1.1, t2 = -0.6;

  const auto pr_product = [&](double a, double b) {
    State<double> st(u.size(), 0.0);
    st[u.index_like()] = 1.0;
    st[u.index_name_val(Name{"z1", 0})] = z1;
    st[u.index_name_val(Name{"z2", 0})] = z2;
    st[u.index_param("theta1")] = a;
    st[u.index_param("theta2")] = b;
    REQUIRE(exec(guide.body, u, st) == ExecStatus::Ok);
    return st[u.index_pr(Name{"z1", 0})] * st[u.index_pr(Name{"z2", 0})];
  };

  State<Dual> st(u.size(), Dual(0.0));
  st[u.index_like()] = Dual(1.0);
  st[u.index_name_val(Name{"z1", 0})] = Dual(z1);
  st[u.index_name_val(Name{"z2", 0})] = Dual(z2);
  st[u.index_param("theta1")] = Dual::seeded(t1, 0, 2);
  st[u.index_param("theta2")] = Dual::seeded(t2, 1, 2);
  REQUIRE(exec(guide.body, u, st) == ExecStatus::Ok);
  const Dual prod = scalar_mul(st[u.index_pr(Name{"z1", 0})], st[u.index_pr(Name{"z2", 0})]);

  CHECK(prod.val == pr_product(t1, t2));
  const double h = 1e-6;
  const double fd1 = (pr_product(t1 + h, t2) - pr_product(t1 - h, t2)) / (2 * h);
  const double fd2 = (pr_product(t1, t2 + h) - pr_product(t1, t2 - h)) / (2 * h);
  CHECK(prod.dot[0] == Approx(fd1).epsilon(1e-7));
  CHECK(prod.dot[1] == Approx(fd2).epsilon(1e-7));
}
