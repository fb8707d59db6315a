#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "svelift/kernel.hpp"
#include "svelift/levy.hpp"
#include "svelift/lift.hpp"
#include "svelift/rng.hpp"

using namespace svelift;

namespace {

struct Fixture {
  std::shared_ptr<const BernsteinMeasure> measure;
  CoefficientSet coeffs;
  LevyModel model;
  JumpPath path;
  std::vector<double> y0 = {1.0};

  explicit Fixture(std::size_t atoms) {
    if (atoms <= 2) {
      measure = std::make_shared<const BernsteinMeasure>(
          make_atomic({{1.0, 2.0}, {2.0, 3.0}}, 0.25));
    } else {
      DensitySpec spec;
      spec.family = DensitySpec::Family::fractional;
      spec.alpha = 0.75;
      spec.nodes = atoms;
      measure =
          std::make_shared<const BernsteinMeasure>(discretize_density(spec));
    }
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
  }
};

}  // namespace

static void BM_SimulateLift(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const TimeGrid grid{1.0, static_cast<std::size_t>(state.range(1))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        simulate_lift(f.measure, f.coeffs, f.model, f.path, grid, f.y0));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(grid.steps) *
                          static_cast<int64_t>(f.measure->size()));
}
BENCHMARK(BM_SimulateLift)
    ->Args({2, 1000})
    ->Args({2, 10000})
    ->Args({60, 1000})
    ->Args({60, 10000})
    ->Args({240, 1000});

static void BM_PicardSolve(benchmark::State& state) {
  const Fixture f(2);
  const TimeGrid grid{1.0, static_cast<std::size_t>(state.range(0))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        picard_solve(f.measure, f.coeffs, f.model, f.path, grid, f.y0));
  }
}
BENCHMARK(BM_PicardSolve)->Arg(250)->Arg(1000);

static void BM_SamplePath(benchmark::State& state) {
  LevyModel model;
  model.marks = {{1.0}, {-1.0}};
  model.rates = {5.0, 5.0};
  Stream rng(11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_path(model, 1.0, rng));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SamplePath);

BENCHMARK_MAIN();
