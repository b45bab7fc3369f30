// Program densities, the value function, and the quadrature reference.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spge/density.hpp"
#include "spge/parse.hpp"
#include "support.hpp"

using namespace spge;
using Catch::Approx;
using testsupport::same_bits;

namespace {

std::vector<double> names_for(const Universe& u,
                              const std::vector<std::pair<Name, double>>& entries) {
  std::vector<double> names(u.name_count(), 0.0);
  for (const auto& [n, v] : entries) names[u.name_slot(n)] = v;
  return names;
}

}  // namespace

TEST_CASE("the reference store is laid out as documented") {
  const CmdPtr c = parse_command("x := sam(a, N(t1, 1), lam y. y)");
  Universe u = Universe::from_programs({c}, {"t1"}, 4);
  const std::vector<double> names = {0.5, -1.0, 0.0, 2.0};
  const State<double> st = make_sigma0(u, std::vector<double>{3.0}, names);
  CHECK(st[u.index_like()] == 1.0);
  for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
    const Name n = u.name_at(slot);
    CHECK(st[u.index_name_val(n)] == names[slot]);
    CHECK(st[u.index_val(n)] == names[slot]);
    CHECK(st[u.index_pr(n)] == normal_pdf(names[slot], 0.0, 1.0));
    CHECK(st[u.index_cnt(n)] == 0.0);
  }
  CHECK(st[u.index_param("t1")] == 3.0);
  CHECK(st[u.index_param("x")] == 0.0);
  CHECK_THROWS_AS(make_sigma0(u, std::vector<double>{}, std::vector<double>{1.0}),
                  std::invalid_argument);
}

TEST_CASE("full density multiplies the likelihood and every prior cell") {
  const Program model = testsupport::load_program("fig1_model");
  Universe u = Universe::from_programs({model.body}, {}, kDefaultNameBound);
  const auto names = names_for(u, {{Name{"z1", 0}, 0.3}, {Name{"z2", 0}, 1.7}});

  const double p = density(model.body, u, std::vector<double>{}, names);
  const double inactive = std::pow(normal_pdf(0.0, 0.0, 1.0), 30.0);
  const double expected = testsupport::kPdf_0_1_1 * normal_pdf(0.3, 0.0, 5.0) *
                          normal_pdf(1.7, 0.3, 3.0) * inactive;
  CHECK(p == Approx(expected).epsilon(1e-12));
  CHECK(std::exp(log_density(model.body, u, std::vector<double>{}, names)) ==
        Approx(expected).epsilon(1e-12));
}

TEST_CASE("double draws and divergence zero the density") {
  const CmdPtr twice = parse_command(
      "x := sam(m, N(0, 1), lam y. y); x := sam(m, N(0, 1), lam y. y)");
  Universe u = Universe::from_programs({twice}, {}, 4);
  const std::vector<double> names(u.name_count(), 0.2);
  CHECK(density(twice, u, {}, names) == 0.0);
  CHECK_THROWS_AS(log_density(twice, u, {}, names), ZeroDensityError);
  // The partial density has no double-draw guard: the prior cell just holds
  // the second draw's score.
  VarSet all = VarSet::full(u.name_count());
  CHECK(std::exp(log_partial_density(twice, u, std::vector<double>{}, names, all)) ==
        Approx(std::pow(normal_pdf(0.2, 0.0, 1.0), 3.0) * normal_pdf(0.2, 0.0, 1.0))
            .epsilon(1e-12));

  const CmdPtr spin = parse_command("while true { skip }");
  Universe us = Universe::from_programs({spin}, {}, 4);
  const std::vector<double> no_names(us.name_count(), 0.0);
  CHECK(density(spin, us, {}, no_names, 1000) == 0.0);
  CHECK_THROWS_AS(log_density(spin, us, {}, no_names, 1000), ZeroDensityError);
  CHECK_THROWS_AS(
      log_partial_density(spin, us, std::vector<double>{}, no_names,
                          VarSet::full(us.name_count()), 1000),
      DivergedError);
}

TEST_CASE("value function records draws and fixes everything else") {
  const CmdPtr c = parse_command("x := sam(a, N(0, 1), lam y. y * 2 + 1)");
  Universe u = Universe::from_programs({c}, {}, 4);
  std::vector<double> names = {0.7, -0.3, 0.1, 0.9};
  const auto vals = value_fn(c, u, std::vector<double>{}, names);
  REQUIRE(vals.size() == names.size());
  CHECK(vals[u.name_slot(Name{"a", 0})] == 0.7 * 2 + 1);
  for (int i = 1; i < 4; ++i) CHECK(vals[static_cast<std::size_t>(i)] == names[static_cast<std::size_t>(i)]);

  const CmdPtr twice = parse_command(
      "x := sam(m, N(0, 1), lam y. y); x := sam(m, N(0, 1), lam y. y)");
  Universe ut = Universe::from_programs({twice}, {}, 4);
  const auto zeros = value_fn(twice, ut, std::vector<double>{},
                              std::vector<double>(ut.name_count(), 0.4));
  for (const double v : zeros) CHECK(v == 0.0);
}

TEST_CASE("value function carries parameter tangents through the mapping") {
  const CmdPtr c = parse_command("x := sam(a, N(0, 1), lam y. y * t1)");
  Universe u = Universe::from_programs({c}, {"t1"}, 4);
  const std::vector<Dual> theta = seed_duals({2.5});
  const std::vector<Dual> names = constant_duals({0.7, 0.0, 0.0, 0.0});
  const auto vals = value_fn(c, u, theta, names);
  const Dual& v = vals[u.name_slot(Name{"a", 0})];
  CHECK(v.val == 0.7 * 2.5);
  REQUIRE(v.dot.size() == 1);
  CHECK(v.dot[0] == 0.7);
  // Untouched slots are constants.
  CHECK(vals[u.name_slot(Name{"a", 1})].dot.empty());
}

TEST_CASE("partial densities multiply across disjoint slot sets") {
  Rng rng(0xDECADEull);
  testsupport::FuzzConfig cfg;
  int checked = 0;
  for (int i = 0; i < 60 && checked < 200; ++i) {
    testsupport::ProgramGen gen(rng.stream(static_cast<std::uint64_t>(i)), cfg);
    const CmdPtr c = gen.command();
    const Universe u = testsupport::fuzz_universe(c, cfg);
    Rng point_rng = rng.stream(0x9000u + static_cast<std::uint64_t>(i));
    for (int k = 0; k < 5; ++k) {
      std::vector<double> names(u.name_count());
      for (double& x : names) x = 1.5 * point_rng.normal();
      VarSet s(u.name_count());
      for (std::size_t slot = 0; slot < u.name_count(); ++slot) {
        if (point_rng.next_u64() & 1) s.set(slot);
      }
      const VarSet rest = ~s;
      double whole = 0.0, left = 0.0, right = 0.0;
      try {
        whole = log_partial_density(c, u, std::vector<double>{}, names,
                                    VarSet::full(u.name_count()));
        left = log_partial_density(c, u, std::vector<double>{}, names, s);
        right = log_partial_density(c, u, std::vector<double>{}, names, rest);
      } catch (const ZeroDensityError&) {
        continue;  // an underflowing factor; nothing to compare
      } catch (const DivergedError&) {
        continue;
      }
      ++checked;
      CHECK(whole == Approx(left + right).margin(1e-12 * (1.0 + std::abs(whole))));
    }
  }
  REQUIRE(checked >= 200);
}

TEST_CASE("without observations the full density is the prior product") {
  Rng rng(0xBEADull);
  testsupport::FuzzConfig cfg;
  cfg.allow_observe = false;
  int checked = 0;
  for (int i = 0; i < 80 && checked < 150; ++i) {
    testsupport::ProgramGen gen(rng.stream(static_cast<std::uint64_t>(i)), cfg);
    const CmdPtr c = gen.command();
    const Universe u = testsupport::fuzz_universe(c, cfg);
    Rng point_rng = rng.stream(0xA000u + static_cast<std::uint64_t>(i));
    for (int k = 0; k < 4; ++k) {
      std::vector<double> names(u.name_count());
      for (double& x : names) x = 1.5 * point_rng.normal();
      double full = 0.0, partial = 0.0;
      try {
        full = log_density(c, u, std::vector<double>{}, names);
        partial = log_partial_density(c, u, std::vector<double>{}, names,
                                      VarSet::full(u.name_count()));
      } catch (const ZeroDensityError&) {
        continue;
      } catch (const DivergedError&) {
        continue;
      }
      ++checked;
      CHECK(full == Approx(partial).margin(1e-12 * (1.0 + std::abs(full))));
    }
  }
  REQUIRE(checked >= 150);
}

TEST_CASE("density agrees with its log form") {
  Rng rng(0x5EED5ull);
  testsupport::FuzzConfig cfg;
  int compared = 0;
  for (int i = 0; i < 60; ++i) {
    testsupport::ProgramGen gen(rng.stream(static_cast<std::uint64_t>(i)), cfg);
    const CmdPtr c = gen.command();
    const Universe u = testsupport::fuzz_universe(c, cfg);
    Rng point_rng = rng.stream(0xB000u + static_cast<std::uint64_t>(i));
    for (int k = 0; k < 4; ++k) {
      std::vector<double> names(u.name_count());
      for (double& x : names) x = 1.5 * point_rng.normal();
      const double d = density(c, u, std::vector<double>{}, names);
      try {
        const double l = log_density(c, u, std::vector<double>{}, names);
        if (d > 0.0) {
          CHECK(std::exp(l) == Approx(d).epsilon(1e-9));
          ++compared;
        } else {
          CHECK(l < -700.0);  // linear-space underflow
        }
      } catch (const ZeroDensityError&) {
        CHECK(d == 0.0);
      }
    }
  }
  REQUIRE(compared >= 100);
}

TEST_CASE("quadrature reproduces the closed objective on the branching pair") {
  const Program model = testsupport::load_program("fig1_model");
  const Program guide = testsupport::load_program("fig1_guide");
  Universe u = Universe::from_programs({model.body, guide.body}, guide.params,
                                       kDefaultNameBound);
  const std::vector<double> theta = {1.0, 2.0};
  QuadratureSpec coarse;
  coarse.points_per_axis = 501;

  const ElboEstimate est = elbo_quadrature(model.body, guide.body, u, theta, coarse);
  CHECK(est.value == Approx(testsupport::kElboAt_1_2).margin(0.02));
  REQUIRE(est.grad.size() == 2);
  CHECK(est.grad[0] == Approx(testsupport::kGrad1At_1_2).margin(0.02));
  CHECK(est.grad[1] == Approx(testsupport::kGrad2At_1_2).margin(0.02));

  // The scalar sweep and the dual sweep are the same quadrature.
  CHECK(elbo_quadrature_value(model.body, guide.body, u, theta, coarse) == est.value);

  // Central differences of the grid objective match the dual gradient far
  // more tightly than either matches the closed form.
  const auto fd = elbo_grad_fd(model.body, guide.body, u, theta, 1e-4, coarse);
  CHECK(fd[0] == Approx(est.grad[0]).margin(1e-6));
  CHECK(fd[1] == Approx(est.grad[1]).margin(1e-6));
}

TEST_CASE("one-dimensional quadrature against a hand integral") {
  const CmdPtr model = parse_command(
      "x := sam(a, N(0, 1), lam y. y); obs(N(x, 1), 0.5)");
  const CmdPtr guide = parse_command("x := sam(a, N(t1, 1), lam y. y)");
  Universe u = Universe::from_programs({model, guide}, {"t1"}, kDefaultNameBound);
  const double t1 = 0.3;
  // E[log(model/guide)] = -t1^2/2 - (t1-1/2)^2/2 - 1/2 - log(2*pi)/2.
  const double closed = -0.5 * t1 * t1 - 0.5 * (t1 - 0.5) * (t1 - 0.5) - 0.5 -
                        0.91893853320467274178;
  const ElboEstimate est = elbo_quadrature(model, guide, u, {t1});
  CHECK(est.value == Approx(closed).margin(1e-4));
  CHECK(est.grad[0] == Approx(-t1 - (t1 - 0.5)).margin(1e-4));
}

TEST_CASE("quadrature refuses more than two reachable slots") {
  const CmdPtr three = parse_command(
      "x := sam(a, N(0, 1), lam y. y); x := sam(b, N(0, 1), lam y. y);"
      "x := sam(name(a, 1), N(0, 1), lam y. y)");
  Universe u3 = Universe::from_programs({three}, {}, 4);
  CHECK_THROWS_AS(elbo_quadrature_value(three, three, u3, {}), TooManyNamesError);

  // A dynamic index reaches every slot of its string.
  const CmdPtr dyn = parse_command("x := sam(name(a, x), N(0, 1), lam y. y)");
  Universe u4 = Universe::from_programs({dyn}, {}, 4);
  CHECK_THROWS_AS(elbo_quadrature_value(dyn, dyn, u4, {}), TooManyNamesError);
  Universe u2 = Universe::from_programs({dyn}, {}, 2);
  QuadratureSpec tiny;
  tiny.points_per_axis = 21;
  CHECK(std::isfinite(elbo_quadrature_value(dyn, dyn, u2, {}, tiny)));
}

TEST_CASE("quadrature is bitwise deterministic") {
  const Program model = testsupport::load_program("fig1_model");
  const Program guide = testsupport::load_program("fig1_guide");
  Universe u = Universe::from_programs({model.body, guide.body}, guide.params,
                                       kDefaultNameBound);
  QuadratureSpec tiny;
  tiny.points_per_axis = 101;
  const ElboEstimate a = elbo_quadrature(model.body, guide.body, u, {0.4, -1.2}, tiny);
  const ElboEstimate b = elbo_quadrature(model.body, guide.body, u, {0.4, -1.2}, tiny);
  CHECK(same_bits(a.value, b.value));
  CHECK(same_bits(a.grad[0], b.grad[0]));
  CHECK(same_bits(a.grad[1], b.grad[1]));
}
