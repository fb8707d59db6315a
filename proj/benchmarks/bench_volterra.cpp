#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>
#include <vector>

#include "svelift/kernel.hpp"
#include "svelift/levy.hpp"
#include "svelift/lift.hpp"
#include "svelift/rng.hpp"
#include "svelift/volterra.hpp"

using namespace svelift;

namespace {

struct Fixture {
  std::shared_ptr<const BernsteinMeasure> measure;
  CoefficientSet coeffs;
  LevyModel model;
  JumpPath path;
  KernelFn kernel;
  ForcingFn forcing;

  Fixture() {
    measure = std::make_shared<const BernsteinMeasure>(
        make_atomic({{1.0, 2.0}, {2.0, 3.0}}, 0.25));
    coeffs.dim = 1;
    coeffs.mark_dim = 1;
    coeffs.drift = [](double, std::span<const double> u,
                      std::span<double> out) { out[0] = -0.5 * u[0]; };
    coeffs.noise = [](double, std::span<const double> xi,
                      std::span<const double>, std::span<double> out) {
      out[0] = 0.1 * xi[0];
    };
    coeffs.lip_f = 0.5;
    model.marks = {{1.0}, {-1.0}};
    model.rates = {1.0, 1.0};
    Stream rng(7);
    path = sample_path(model, 1.0, rng);
    auto m = measure;
    kernel = [m](double t) { return kernel_eval(*m, t); };
    forcing = [](double, std::span<double> out) { out[0] = 1.0; };
  }
};

}  // namespace

// The direct scheme is O(steps^2): the per-item cost should stay flat
// when items are counted as steps^2.
static void BM_SimulateVolterra(benchmark::State& state) {
  const Fixture f;
  const TimeGrid grid{1.0, static_cast<std::size_t>(state.range(0))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        simulate_volterra(f.kernel, f.coeffs, f.model, f.path, grid,
                          f.forcing));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(grid.steps) *
                          static_cast<int64_t>(grid.steps));
}
BENCHMARK(BM_SimulateVolterra)->Arg(250)->Arg(1000)->Arg(4000);

// Head-to-head at matched grids: the lift is O(steps * atoms) and wins
// for long horizons; this pairing makes the crossover visible.
static void BM_LiftVsVolterra_Lift(benchmark::State& state) {
  const Fixture f;
  const TimeGrid grid{1.0, static_cast<std::size_t>(state.range(0))};
  const std::vector<double> y0 = {1.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        simulate_lift(f.measure, f.coeffs, f.model, f.path, grid, y0));
  }
}
BENCHMARK(BM_LiftVsVolterra_Lift)->Arg(250)->Arg(1000)->Arg(4000);

BENCHMARK_MAIN();
