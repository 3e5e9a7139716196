#include <benchmark/benchmark.h>

#include "usbinject/scenario.hpp"

using namespace usbinject;

namespace {

void run_file(benchmark::State& state, const char* file) {
  const ScenarioConfig cfg = load_scenario(std::string(USBINJECT_SCENARIO_DIR) + "/" + file);
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(cfg));
}

BENCHMARK_CAPTURE(run_file, keystroke_ls, "keystroke_ls.json")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(run_file, dos_bias_1s, "dos_bias.json")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(run_file, file_hijack_64k, "file_hijack_65536.json")->Unit(benchmark::kMillisecond);

void BM_Matrix(benchmark::State& state) {
  MatrixSpec spec;
  spec.kind = state.range(0) == 0 ? MatrixKind::TtMatrix : MatrixKind::TierSweep;
  for (auto _ : state) benchmark::DoNotOptimize(run_matrix(spec, static_cast<int>(state.range(1))));
}
BENCHMARK(BM_Matrix)->Args({0, 1})->Args({1, 1})->Args({1, 4})->Unit(benchmark::kMillisecond);

}  // namespace
