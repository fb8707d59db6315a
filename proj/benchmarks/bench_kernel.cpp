#include <benchmark/benchmark.h>

#include <cmath>

#include "svelift/kernel.hpp"

using namespace svelift;

static void BM_DiscretizeFractional(benchmark::State& state) {
  DensitySpec spec;
  spec.family = DensitySpec::Family::fractional;
  spec.alpha = 0.75;
  spec.nodes = static_cast<std::size_t>(state.range(0));
  spec.x_min = 1e-2;
  spec.x_max = 1e4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(discretize_density(spec));
  }
}
BENCHMARK(BM_DiscretizeFractional)->Arg(30)->Arg(60)->Arg(120)->Arg(240);

static void BM_KernelEval(benchmark::State& state) {
  DensitySpec spec;
  spec.family = DensitySpec::Family::fractional;
  spec.alpha = 0.75;
  spec.nodes = static_cast<std::size_t>(state.range(0));
  const BernsteinMeasure m = discretize_density(spec);
  double t = 0.05;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernel_eval(m, t));
    t = t < 5.0 ? t * 1.01 : 0.05;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_KernelEval)->Arg(30)->Arg(60)->Arg(120);

static void BM_DiscretizeGammaMix(benchmark::State& state) {
  DensitySpec spec;
  spec.family = DensitySpec::Family::gamma_mix;
  spec.components = {{1.0, 2.0, 3.0}, {0.5, 1.3, 0.7}};
  spec.nodes = static_cast<std::size_t>(state.range(0));
  spec.x_min = 1e-3;
  spec.x_max = 1e3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(discretize_density(spec));
  }
}
BENCHMARK(BM_DiscretizeGammaMix)->Arg(40)->Arg(80);

BENCHMARK_MAIN();
