#include <benchmark/benchmark.h>

#include "bfvae/fvh_lt.hpp"

using namespace bfvae;

namespace {

struct Fixture {
  vae::VaeModel model;
  Tensor2 x;
};

Fixture make(std::size_t n) {
  Rng rng(1);
  auto model = vae::VaeModel::create(vae::ObjectiveSpec::bf_vae(1.0, 0.0), {}, 15, 5, false, rng);
  Rng data(2);
  return {std::move(model), standard_normal(n, 15, data)};
}

void BM_FvhParallel(benchmark::State& state) {
  const auto f = make(static_cast<std::size_t>(state.range(0)));
  const auto spec = fvh::TraversalSpec::posterior_scaled(3.0);
  for (auto _ : state) benchmark::DoNotOptimize(fvh::fvh_lt_run(f.model, f.x, std::nullopt, spec, 7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FvhReference(benchmark::State& state) {
  const auto f = make(static_cast<std::size_t>(state.range(0)));
  const auto spec = fvh::TraversalSpec::posterior_scaled(3.0);
  for (auto _ : state) benchmark::DoNotOptimize(fvh::fvh_lt_run_reference(f.model, f.x, std::nullopt, spec, 7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_FvhParallel)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FvhReference)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
