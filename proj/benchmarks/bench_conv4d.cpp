#include <benchmark/benchmark.h>

#include <random>

#include "seg4d/model.hpp"
#include "seg4d/ops.hpp"

using namespace seg4d;

namespace {

Tensor<float> uniform(const Shape& shape, std::uint64_t seed, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor<float> t(shape, requires_grad);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Args: channels, X, T, stride.
void run_conv(benchmark::State& state, ConvAlgorithm algo) {
  const std::int64_t c = state.range(0), x = state.range(1), t = state.range(2), s = state.range(3);
  const auto in = uniform({1, c, x, x, x * 3 / 4, t}, 1);
  const auto w = uniform({c, c, 3, 3, 3, 3}, 2);
  const auto b = uniform({c}, 3);
  const Conv4dOptions opts{{s, s, s, s}, algo};
  std::int64_t outputs = 0;
  for (auto _ : state) {
    auto y = conv4d<float>(nullptr, in, w, b, opts);
    outputs = y.numel();
    benchmark::DoNotOptimize(y.data().data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(outputs * c * 81), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvNaive3d(benchmark::State& state) { run_conv(state, ConvAlgorithm::kNaive3d); }
void BM_ConvTemporal(benchmark::State& state) { run_conv(state, ConvAlgorithm::kTemporal); }
void BM_ConvDirect(benchmark::State& state) { run_conv(state, ConvAlgorithm::kDirect); }

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({4, 16, 8, 1})->Args({4, 32, 8, 1})->Args({8, 16, 8, 2})->Args({16, 8, 4, 1})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_ConvNaive3d)->Apply(conv_args);
BENCHMARK(BM_ConvTemporal)->Apply(conv_args);
BENCHMARK(BM_ConvDirect)->Apply(conv_args);

void BM_ConvBackward(benchmark::State& state) {
  const auto x = uniform({1, 4, 16, 16, 12, 8}, 4, true);
  const auto w = uniform({4, 4, 3, 3, 3, 3}, 5, true);
  const auto b = uniform({4}, 6, true);
  for (auto _ : state) {
    Tape<float> tape;
    auto y = sum(&tape, conv4d(&tape, x, w, b, {}));
    tape.backward(y);
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetLabel("4ch 16x16x12x8");
}
BENCHMARK(BM_ConvBackward)->Unit(benchmark::kMillisecond);

void BM_DeskForward(benchmark::State& state) {
  const auto model = build_model(state.range(0) ? NetConfig::desk_4d() : NetConfig::desk_3d(), 1);
  const auto& crop = model.config.crop;
  const auto x = uniform({1, 1, crop[0], crop[1], crop[2], crop[3]}, 7);
  for (auto _ : state) {
    auto y = forward<float>(nullptr, model, x);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetLabel(state.range(0) ? "desk 4d" : "desk 3d");
}
BENCHMARK(BM_DeskForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
