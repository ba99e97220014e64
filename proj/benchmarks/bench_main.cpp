#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "evstop/diagnostics.hpp"
#include "evstop/ensemble.hpp"
#include "evstop/simlab.hpp"

using namespace evstop;

namespace {

std::vector<std::vector<double>> random_rows(std::size_t k, std::size_t m) {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(-10.0, 0.0);
    std::vector<std::vector<double>> rows(k, std::vector<double>(m));
    for (auto& r : rows) {
        for (auto& v : r) {
            v = u(gen);
        }
    }
    return rows;
}

void BM_RunChain(benchmark::State& state) {
    ScenarioSpec spec;
    spec.sigma = 1.0;
    spec.budget = static_cast<std::size_t>(state.range(0));
    const auto steps = generate_log_ratio_stream(spec, 0);
    const StoppingConfig never(1e-300, spec.budget);
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_chain(steps, never));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RunChain)->Arg(200)->Arg(10000);

void BM_StepLogEvalue(benchmark::State& state) {
    const auto rows = random_rows(2, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(step_log_evalue(rows[0], rows[1]));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StepLogEvalue)->Arg(100)->Arg(10000);

void BM_Lppd(benchmark::State& state) {
    const auto rows = random_rows(static_cast<std::size_t>(state.range(0)), 1000);
    for (auto _ : state) {
        benchmark::DoNotOptimize(lppd(rows));
    }
}
BENCHMARK(BM_Lppd)->Arg(16)->Arg(256);

void BM_Iac(benchmark::State& state) {
    std::mt19937_64 gen(2);
    std::normal_distribution<double> z;
    std::vector<double> x(static_cast<std::size_t>(state.range(0)));
    double prev = 0.0;
    for (auto& v : x) {
        prev = 0.5 * prev + z(gen);
        v = prev;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(integrated_autocorrelation_time(x));
    }
}
BENCHMARK(BM_Iac)->Arg(200)->Arg(100000);

void BM_CertifyValidity(benchmark::State& state) {
    ScenarioSpec spec;
    spec.sigma = 1.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(certify_validity(spec, 0.05, 2000));
    }
}
BENCHMARK(BM_CertifyValidity)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();
