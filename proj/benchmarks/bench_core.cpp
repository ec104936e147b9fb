#include <benchmark/benchmark.h>

#include <vector>

#include "phasedfl/data.hpp"
#include "phasedfl/federation.hpp"
#include "phasedfl/metrics.hpp"
#include "phasedfl/nn.hpp"
#include "phasedfl/rng.hpp"
#include "phasedfl/sparsify.hpp"

using namespace phasedfl;

namespace {

std::vector<LabeledExample> image_batch(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledExample> batch;
  for (int i = 0; i < n; ++i) {
    Tensor img = Tensor::zeros({28, 28, 1});
    for (double& v : img.values) v = rng.next_double();
    batch.push_back({std::move(img), i % 10});
  }
  return batch;
}

void ForwardMnistTiny(benchmark::State& state) {
  Architecture arch = Architecture::mnist_tiny();
  ModelParams params = init_params(arch, 1);
  std::vector<LabeledExample> batch = image_batch(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) {
    ForwardResult out = forward(params, arch, batch);
    benchmark::DoNotOptimize(out.loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(ForwardMnistTiny)->Arg(1)->Arg(32);

void BackwardMnistTiny(benchmark::State& state) {
  Architecture arch = Architecture::mnist_tiny();
  ModelParams params = init_params(arch, 1);
  std::vector<LabeledExample> batch = image_batch(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) {
    Gradient g = backward(params, arch, batch);
    benchmark::DoNotOptimize(g.layers[0].weights[0]);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BackwardMnistTiny)->Arg(1)->Arg(32);

void BuildMaskBench(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> values(static_cast<std::size_t>(state.range(0)));
  for (double& v : values) v = rng.uniform(-1.0, 1.0);
  ModelParams p;
  p.layers.push_back({"w", Tensor({static_cast<int>(values.size())}, values),
                      Tensor::zeros({1})});
  for (auto _ : state) {
    PruneMask mask = build_mask(p, PruneRate(0.3));
    benchmark::DoNotOptimize(mask.entries[0].bits.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BuildMaskBench)->Range(1 << 10, 1 << 18)->Complexity(benchmark::oNLogN);

void AggregatePair(benchmark::State& state) {
  Architecture arch = Architecture::mnist_tiny();
  std::vector<std::pair<ModelParams, std::size_t>> updates{
      {init_params(arch, 4), 500}, {init_params(arch, 5), 500}};
  for (auto _ : state) {
    ModelParams mean = aggregate(updates, false);
    benchmark::DoNotOptimize(mean.layers[0].weights[0]);
  }
}
BENCHMARK(AggregatePair);

void SerializeAndCompress(benchmark::State& state) {
  Architecture arch = Architecture::mnist_tiny();
  ModelParams params = init_params(arch, 6);
  PruneMask mask = build_mask(params, PruneRate(0.8));
  for (auto _ : state) {
    std::size_t n = compressed_size(serialize_model(params, &mask));
    benchmark::DoNotOptimize(n);
  }
}
BENCHMARK(SerializeAndCompress);

}  // namespace

BENCHMARK_MAIN();
