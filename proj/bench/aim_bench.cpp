// Serial reference vs OpenMP variant for the hot kernels.

#include <benchmark/benchmark.h>

#include <vector>

#include "aim/fisher.hpp"
#include "aim/kernels.hpp"
#include "aim/rng.hpp"
#include "aim/tasks.hpp"
#include "aim/trainer.hpp"

using namespace aim;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <auto Kernel>
void gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

struct Fixture {
  Stream stream;
  ModelConfig model;
  Fixture() {
    StreamSpec s;
    s.num_tasks = 1;
    s.train_per_task = 256;
    s.standard_test_per_task = 256;
    s.comp_test_per_task = 16;
    stream = build_stream(s);
    model = model_config_for(stream, ModelConfig{});
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void fisher(benchmark::State& state) {
  const auto& f = fixture();
  const ToyVLM model(f.model);
  const bool parallel = state.range(0) != 0;
  for (auto _ : state) {
    auto v = estimate_fisher(model, f.stream.tasks[0].train, 128, 7, parallel);
    benchmark::DoNotOptimize(v.data());
  }
  state.SetLabel(parallel ? "parallel" : "serial");
}

template <auto Eval>
void evaluate(benchmark::State& state) {
  const auto& f = fixture();
  const ToyVLM model(f.model);
  for (auto _ : state) benchmark::DoNotOptimize(Eval(model, f.stream.tasks[0].standard_test));
}

}  // namespace

BENCHMARK(gemm<kernels::gemm_nn_serial>)->Name("gemm_nn/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(gemm<kernels::gemm_nn_parallel>)->Name("gemm_nn/parallel")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(gemm<kernels::gemm_nt_serial>)->Name("gemm_nt/serial")->Arg(128);
BENCHMARK(gemm<kernels::gemm_nt_parallel>)->Name("gemm_nt/parallel")->Arg(128);
BENCHMARK(gemm<kernels::gemm_tn_serial>)->Name("gemm_tn/serial")->Arg(128);
BENCHMARK(gemm<kernels::gemm_tn_parallel>)->Name("gemm_tn/parallel")->Arg(128);
BENCHMARK(fisher)->Name("fisher/serial")->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(fisher)->Name("fisher/parallel")->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(evaluate<evaluate_serial>)->Name("evaluate/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(evaluate<evaluate_parallel>)->Name("evaluate/parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
