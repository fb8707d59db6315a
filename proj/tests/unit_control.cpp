#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "svelift/common.hpp"
#include "svelift/control.hpp"
#include "svelift/kernel.hpp"
#include "svelift/levy.hpp"
#include "svelift/lift.hpp"
#include "svelift/rng.hpp"
#include "test_util.hpp"

using namespace svelift;

namespace {

CoefficientSet passive_coeffs(double sigma_scale) {
  CoefficientSet c;
  c.dim = 1;
  c.mark_dim = 1;
  c.drift = [](double, std::span<const double>, std::span<double> out) {
    out[0] = 0.0;
  };
  c.noise = [sigma_scale](double, std::span<const double> xi,
                          std::span<const double>, std::span<double> out) {
    out[0] = sigma_scale * xi[0];
  };
  c.lip_f = 0.0;
  c.lip_sigma = 0.0;
  return c;
}

/// Two actions "damp"/"idle" with constant ratios and costs; the
/// workhorse problem for policy and weight tests.
ControlProblem two_action_problem(double lambda, double rho_damp,
                                  double l_damp) {
  ControlProblem p;
  p.measure = testutil::shared_measure(make_atomic({{1.0, 1.0}}));
  p.coeffs = passive_coeffs(0.1);
  p.levy.marks = {{1.0}};
  p.levy.rates = {lambda};
  p.y0 = {1.0};
  p.grid = TimeGrid{1.0, 100};
  p.action_labels = {"damp", "idle"};
  p.intensity = [rho_damp](double, std::span<const double>,
                           std::span<const double>, std::size_t a) {
    return a == 0 ? rho_damp : 1.0;
  };
  p.running_cost = [l_damp](double, std::span<const double>, std::size_t a) {
    return a == 0 ? l_damp : 0.0;
  };
  p.terminal_cost = [](std::span<const double> u) { return u[0]; };
  p.intensity_bound = 2.0;
  return p;
}

}  // namespace

TEST_CASE("problem validation catches structural violations") {
  ControlProblem p = two_action_problem(2.0, 0.5, 0.3);
  Stream rng(1);
  CHECK_NOTHROW(p.validate(rng));

  ControlProblem bad = p;
  bad.action_labels = {};
  Stream r2(1);
  CHECK_THROWS_AS(bad.validate(r2), ConfigError);

  bad = p;
  bad.intensity = [](double, std::span<const double>, std::span<const double>,
                     std::size_t) { return 3.0; };  // above the bound
  Stream r3(1);
  try {
    bad.validate(r3);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(e.field_path() == "control.r");
  }

  bad = p;
  bad.intensity_bound = 0.0;
  Stream r4(1);
  CHECK_THROWS_AS(bad.validate(r4), ConfigError);

  bad = p;
  bad.cost_moment_exponent = 1.0;
  Stream r5(1);
  CHECK_THROWS_AS(bad.validate(r5), ConfigError);
}

TEST_CASE("policy kinds and labels") {
  const Policy c = Policy::constant(1, "idle");
  CHECK(c.kind() == "constant");
  CHECK(c.label() == "idle");
  LiftState dummy;
  CHECK(c.action(0.3, dummy) == 1);

  const Policy s =
      Policy::schedule([](double t) { return t < 0.5 ? 0u : 1u; }, "flip");
  CHECK(s.kind() == "schedule");
  CHECK(s.action(0.2, dummy) == 0);
  CHECK(s.action(0.7, dummy) == 1);

  const Policy f = Policy::feedback(
      [](double, const LiftState& y) { return y.values[0] > 0 ? 0u : 1u; });
  CHECK(f.kind() == "feedback");
  dummy.values = {1.0};
  CHECK(f.action(0.0, dummy) == 0);
  dummy.values = {-1.0};
  CHECK(f.action(0.0, dummy) == 1);
}

TEST_CASE("pointwise minimized generator: worked examples") {
  ControlProblem p = two_action_problem(1.0, 2.0, 1.0);
  // l = (1, 0), z = 0: value 0 at the second action.
  {
    const std::vector<double> u = {0.0}, z = {0.0};
    const HamiltonianResult h = hamiltonian(p, 0.0, u, z);
    CHECK(h.value == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(h.argmin == 1);
  }
  // l = (0, 0), lambda = 1, z = -2, r = (2, 1): first action wins at -2.
  p.running_cost = [](double, std::span<const double>, std::size_t) {
    return 0.0;
  };
  {
    const std::vector<double> u = {0.0}, z = {-2.0};
    const HamiltonianResult h = hamiltonian(p, 0.0, u, z);
    CHECK(h.value == doctest::Approx(-2.0).epsilon(1e-15));
    CHECK(h.argmin == 0);
  }
  // Exact tie: lowest index wins.
  p.intensity = [](double, std::span<const double>, std::span<const double>,
                   std::size_t) { return 1.0; };
  {
    const std::vector<double> u = {0.0}, z = {3.0};
    const HamiltonianResult h = hamiltonian(p, 0.0, u, z);
    CHECK(h.argmin == 0);
    CHECK(h.value == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("minimized generator is Lipschitz in the adjoint variable") {
  // |H(z) - H(z')| <= (bound + 1) sqrt(sum lambda) sqrt(sum dz^2 lambda).
  ControlProblem p;
  p.measure = testutil::shared_measure(make_atomic({{1.0, 1.0}}));
  p.coeffs = passive_coeffs(0.1);
  p.levy.marks = {{1.0}, {-1.0}, {0.5}};
  p.levy.rates = {1.0, 2.0, 0.5};
  p.y0 = {1.0};
  p.grid = TimeGrid{1.0, 10};
  p.action_labels = {"a", "b", "c"};
  p.intensity = [](double t, std::span<const double> u,
                   std::span<const double> xi, std::size_t a) {
    const double base = 0.4 + 0.3 * static_cast<double>(a);
    return std::min(2.0, base + 0.1 * std::abs(std::sin(t + u[0] + xi[0])));
  };
  p.running_cost = [](double t, std::span<const double> u, std::size_t a) {
    return 0.2 * static_cast<double>(a) + 0.1 * u[0] * u[0] + 0.05 * t;
  };
  p.terminal_cost = [](std::span<const double> u) { return u[0]; };
  p.intensity_bound = 2.0;

  const double sum_lambda = 3.5;
  const double lip = (p.intensity_bound + 1.0) * std::sqrt(sum_lambda);
  Stream rng(99);
  for (int rep = 0; rep < 1000; ++rep) {
    const double t = rng.uniform();
    const std::vector<double> u = {4.0 * rng.uniform() - 2.0};
    std::vector<double> z(3), zp(3);
    for (std::size_t i = 0; i < 3; ++i) {
      z[i] = 4.0 * rng.uniform() - 2.0;
      zp[i] = 4.0 * rng.uniform() - 2.0;
    }
    const double hz = hamiltonian(p, t, u, z).value;
    const double hzp = hamiltonian(p, t, u, zp).value;
    double dz_weighted = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      dz_weighted += (z[i] - zp[i]) * (z[i] - zp[i]) * p.levy.rates[i];
    CHECK(std::abs(hz - hzp) <=
          lip * std::sqrt(dz_weighted) * (1.0 + 1e-12) + 1e-14);
  }
}

TEST_CASE("controlled run: per-step actions, costs, and bookkeeping") {
  ControlProblem p = two_action_problem(2.0, 0.5, 0.3);
  const Policy sched =
      Policy::schedule([](double t) { return t < 0.5 ? 0u : 1u; }, "flip");
  Stream rng(5);
  const ControlledRun run = controlled_simulate(p, sched, rng);
  REQUIRE(run.actions.size() == p.grid.steps);
  for (std::size_t k = 0; k < p.grid.steps; ++k)
    CHECK(run.actions[k] == (p.grid.time(k) < 0.5 ? 0u : 1u));
  // Running cost of the schedule is a grid quadrature of a step
  // function: exactly 0.3 * 0.5 here.
  CHECK(run.running_cost == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(run.terminal_cost ==
        doctest::Approx(run.trajectory.projected.back()[0]).epsilon(1e-15));
  CHECK(run.total_cost() ==
        doctest::Approx(run.running_cost + run.terminal_cost).epsilon(1e-15));
  CHECK(run.path.horizon == p.grid.horizon);
}

TEST_CASE("constant unit-ratio action: log weight is exactly zero") {
  ControlProblem p = two_action_problem(2.0, 0.5, 0.3);
  Stream rng(6);
  const ControlledRun run = controlled_simulate(p, Policy::constant(1), rng);
  CHECK(run.log_weight == 0.0);
}

TEST_CASE("constant-tilt log weight matches the closed form") {
  // r == c constant: log W = N ln c - (c - 1) lambda T exactly (the
  // frozen-per-step ratio is globally constant here).
  ControlProblem p = two_action_problem(2.0, 0.5, 0.3);
  Stream rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const ControlledRun run =
        controlled_simulate(p, Policy::constant(0), rng);
    const double n = static_cast<double>(run.path.events.size());
    const double expected =
        n * std::log(0.5) - (0.5 - 1.0) * 2.0 * p.grid.horizon;
    CHECK(run.log_weight == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("out-of-band controlled intensity names the action") {
  ControlProblem p = two_action_problem(2.0, 0.5, 0.3);
  p.intensity = [](double, std::span<const double>, std::span<const double>,
                   std::size_t a) { return a == 0 ? 4.0 : 1.0; };
  Stream rng(8);
  try {
    controlled_simulate(p, Policy::constant(0, "damp"), rng);
    FAIL("expected a bound violation");
  } catch (const IntensityBoundError& e) {
    CHECK(e.action() == "damp");
    CHECK(e.ratio() == 4.0);
    CHECK(e.bound() == 2.0);
  }
}

TEST_CASE("zero running cost and constant terminal cost: J is exact") {
  ControlProblem p = two_action_problem(2.0, 0.5, 0.0);
  p.running_cost = [](double, std::span<const double>, std::size_t) {
    return 0.0;
  };
  p.terminal_cost = [](std::span<const double>) { return 0.875; };
  const RngFamily fam(2020);
  const CostEstimate est =
      cost_evaluate(p, Policy::constant(0), 500, fam);
  CHECK(est.j == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(est.se == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(est.n_paths == 500);
}

TEST_CASE("unit running cost and zero terminal cost: J equals the horizon") {
  ControlProblem p = two_action_problem(2.0, 0.5, 0.0);
  p.running_cost = [](double, std::span<const double>, std::size_t) {
    return 1.0;
  };
  p.terminal_cost = [](std::span<const double>) { return 0.0; };
  const RngFamily fam(2021);
  const CostEstimate est = cost_evaluate(p, Policy::constant(1), 200, fam);
  CHECK(est.j == doctest::Approx(p.grid.horizon).epsilon(1e-12));
  CHECK(est.se == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cost evaluation needs at least two paths") {
  ControlProblem p = two_action_problem(2.0, 0.5, 0.3);
  const RngFamily fam(1);
  CHECK_THROWS_AS(cost_evaluate(p, Policy::constant(1), 1, fam),
                  std::invalid_argument);
}

TEST_CASE("thinned and reweighted estimators agree") {
  // Same functional E^tilt[u(T)] computed two ways: direct thinning
  // under the tilted measure vs base sampling with likelihood weights.
  ControlProblem p = two_action_problem(3.0, 1.5, 0.0);
  p.terminal_cost = [](std::span<const double> u) { return u[0]; };
  const Policy damp = Policy::constant(0, "damp");

  const std::size_t n = 20000;
  const RngFamily fam_a(909), fam_b(910);
  const CostEstimate tilted = cost_evaluate(p, damp, n, fam_a, true);
  const CostEstimate reweighted = cost_evaluate(p, damp, n, fam_b, false);
  const double band =
      3.0 * std::sqrt(tilted.se * tilted.se + reweighted.se * reweighted.se);
  CHECK(std::abs(tilted.j - reweighted.j) <= band);
}

TEST_CASE("tilted terminal mean matches the compensated closed form") {
  ControlProblem p = two_action_problem(2.0, 1.5, 0.0);
  p.y0 = {0.0};
  p.terminal_cost = [](std::span<const double> u) { return u[0]; };
  const RngFamily fam(321);
  const CostEstimate est = cost_evaluate(p, Policy::constant(0), 20000, fam);
  const double expected = (1.5 - 1.0) * 2.0 * 0.1 * (1.0 - std::exp(-1.0));
  CHECK(std::abs(est.j - expected) <= 3.0 * est.se + 5e-3);
}

TEST_CASE("controlled paths under a unit ratio match the base dynamics") {
  // Two-sample KS on u(T): controlled simulation with r == 1 vs the
  // plain stepper driven by base-measure paths.
  ControlProblem p = two_action_problem(10.0, 0.5, 0.0);
  p.y0 = {0.0};
  const std::size_t n = 10000;

  std::vector<double> controlled;
  controlled.reserve(n);
  Stream rc(111);
  for (std::size_t i = 0; i < n; ++i)
    controlled.push_back(controlled_simulate(p, Policy::constant(1), rc)
                             .trajectory.projected.back()[0]);

  std::vector<double> base;
  base.reserve(n);
  Stream rb(222);
  for (std::size_t i = 0; i < n; ++i) {
    const JumpPath path = sample_path(p.levy, p.grid.horizon, rb);
    base.push_back(simulate_lift(p.measure, p.coeffs, p.levy, path, p.grid,
                                 p.y0)
                       .projected.back()[0]);
  }
  CHECK(testutil::ks_two_sample_p(controlled, base) > 0.01);
}

TEST_CASE("evaluation is deterministic in the seed family") {
  ControlProblem p = two_action_problem(2.0, 0.5, 0.3);
  const RngFamily fam(777);
  const CostEstimate a = cost_evaluate(p, Policy::constant(0), 300, fam);
  const CostEstimate b = cost_evaluate(p, Policy::constant(0), 300, fam);
  CHECK(a.j == b.j);
  CHECK(a.se == b.se);
}
