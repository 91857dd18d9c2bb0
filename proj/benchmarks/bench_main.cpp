#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "octfluid/autograd.hpp"
#include "octfluid/forest.hpp"
#include "octfluid/preproc.hpp"
#include "octfluid/regions.hpp"
#include "octfluid/trainer.hpp"
#include "octfluid/unet.hpp"

using namespace octfluid;
using autograd::Shape;
using autograd::Tensor;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Tensor t(s);
  for (auto& v : t.span()) v = uni(gen);
  return t;
}

std::vector<trainer::Sample> blob_samples(int size, int n) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<trainer::Sample> out(static_cast<std::size_t>(n));
  for (auto& s : out) {
    s.width = s.height = size;
    s.image.resize(std::size_t(2 * size * size));
    for (auto& v : s.image) v = uni(gen);
    s.labels.assign(std::size_t(size * size), 0);
    for (int y = size / 4; y < size / 2; ++y)
      for (int x = size / 4; x < size / 2; ++x) s.labels[std::size_t(y * size + x)] = 1;
  }
  return out;
}

}  // namespace

// Forward and backward of one 3x3 convolution; args: channels, spatial size.
static void BM_Conv3x3(benchmark::State& state) {
  const int c = int(state.range(0)), hw = int(state.range(1));
  autograd::Parameter w("w", random_tensor(Shape{c, c, 3, 3}, 1));
  autograd::Parameter b("b", random_tensor(Shape{1, 1, 1, c}, 2));
  const Tensor x = random_tensor(Shape{4, c, hw, hw}, 3);
  Tensor ones(Shape{4, c, hw, hw}, 1.0);
  for (auto _ : state) {
    autograd::Tape t;
    const auto y = autograd::conv3x3(t, t.input(x), t.parameter(w), t.parameter(b));
    t.backward(autograd::weighted_sum(t, y, ones));
    benchmark::DoNotOptimize(w.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * 4 * std::int64_t(hw) * hw);
}
BENCHMARK(BM_Conv3x3)->Args({8, 64})->Args({32, 32})->Args({64, 8})->Unit(benchmark::kMicrosecond);

// One optimizer step of the segmentation network on a batch of 4.
static void BM_UnetStep(benchmark::State& state) {
  unet::NetConfig nc;
  nc.base_channels = int(state.range(0));
  const int size = int(state.range(1));
  auto net = unet::Network::build(nc, 1);
  const auto samples = blob_samples(size, 4);
  std::vector<const trainer::Sample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  trainer::TrainConfig tc;
  tc.learning_rate = 1e-3;
  trainer::Trainer tr(net, tc);
  for (auto _ : state) benchmark::DoNotOptimize(tr.step(batch));
}
BENCHMARK(BM_UnetStep)->Args({8, 64})->Args({16, 64})->Unit(benchmark::kMillisecond);

// Test-mode inference of one B-scan.
static void BM_UnetPredict(benchmark::State& state) {
  unet::NetConfig nc;
  nc.base_channels = int(state.range(0));
  auto net = unet::Network::build(nc, 1);
  const auto samples = blob_samples(int(state.range(1)), 1);
  const trainer::Sample* one[] = {&samples[0]};
  const Tensor x = trainer::stack_images(one);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
}
BENCHMARK(BM_UnetPredict)->Args({8, 64})->Args({16, 128})->Unit(benchmark::kMillisecond);

// 8-connected labelling of a random binary image; arg: side length.
static void BM_Components(benchmark::State& state) {
  const int n = int(state.range(0));
  std::mt19937_64 gen(5);
  std::vector<std::uint8_t> img(std::size_t(n) * n);
  for (auto& v : img) v = gen() % 3 == 0;
  for (auto _ : state) benchmark::DoNotOptimize(regions::components_8(img, n, n));
  state.SetItemsProcessed(state.iterations() * std::int64_t(n) * n);
}
BENCHMARK(BM_Components)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

// ROF smoothing of one B-scan for 40 iterations.
static void BM_Rof(benchmark::State& state) {
  const int n = int(state.range(0));
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> f(std::size_t(n) * n);
  for (auto& v : f) v = uni(gen);
  for (auto _ : state) benchmark::DoNotOptimize(preproc::rof_denoise(f, std::size_t(n), std::size_t(n), 0.05, 40));
}
BENCHMARK(BM_Rof)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

// Training a 100-tree forest on 16-feature samples; arg: sample count.
static void BM_ForestTrain(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  std::mt19937_64 gen(9);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<forest::Features> x(n);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 4 == 0;
    for (auto& v : x[i]) v = g(gen) + (y[i] ? 0.7 : 0.0);
  }
  forest::ForestConfig fc;
  for (auto _ : state) benchmark::DoNotOptimize(forest::Forest::train(x, y, fc).n_trees());
}
BENCHMARK(BM_ForestTrain)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
