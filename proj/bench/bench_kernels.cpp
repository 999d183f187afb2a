// Serial reference vs OpenMP kernels: pass@k curves, estimator simulation
// and candidate judging against the in-process canned backend.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "plansearch/corpus.hpp"
#include "plansearch/executor.hpp"
#include "plansearch/metrics.hpp"

using namespace plansearch;

namespace {

std::vector<metrics::ProblemStats> random_stats(std::size_t problems) {
    std::mt19937_64 rng(7);
    std::vector<metrics::ProblemStats> out;
    for (std::size_t i = 0; i < problems; ++i) {
        auto s = oracles::random_pool(rng);
        s.n = 200;
        s.c = std::min(s.c, s.n);
        s.n_filtered = std::max(s.n_filtered, s.c);
        s.c_filtered = s.c;
        out.push_back(s);
    }
    return out;
}

void BM_CurveSerial(benchmark::State& state) {
    const auto stats = random_stats(static_cast<std::size_t>(state.range(0)));
    const auto ks = metrics::k_grid(200);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::serial::pass_at_k_curve("m", stats, ks, false));
}

void BM_CurveParallel(benchmark::State& state) {
    const auto stats = random_stats(static_cast<std::size_t>(state.range(0)));
    const auto ks = metrics::k_grid(200);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::pass_at_k_curve("m", stats, ks, false));
}

void BM_SimulateSerial(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(metrics::serial::simulate_estimator_mean(20, 0.3, 5, state.range(0), 1));
    }
}

void BM_SimulateParallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(metrics::simulate_estimator_mean(20, 0.3, 5, state.range(0), 1));
}

struct JudgeSetup {
    JudgeSetup(std::size_t candidates)
        : dataset(corpus::parse_dataset(fixtures::toy_dataset(1).dump())),
          backend(fixtures::canned_rules(fixtures::toy_dataset(1))) {
        const char* kinds[] = {"CORRECT", "WRONG", "PUBLIC_ONLY"};
        for (std::size_t i = 0; i < candidates; ++i) {
            search::SolutionCandidate c;
            c.problem_id = "p1";
            c.code = std::string("print('") + kinds[i % 3] + "')";
            c.format_ok = true;
            c.sample_index = i;
            pool.push_back(c);
        }
    }
    corpus::Dataset dataset;
    exec::CannedBackend backend;
    std::vector<search::SolutionCandidate> pool;
};

void BM_JudgeSerial(benchmark::State& state) {
    JudgeSetup s(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(exec::serial::run_candidates(s.pool, s.dataset.problems[0], {}, s.backend, {}));
    }
}

void BM_JudgeParallel(benchmark::State& state) {
    JudgeSetup s(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(exec::run_candidates(s.pool, s.dataset.problems[0], {}, s.backend, {}));
    }
}

}  // namespace

BENCHMARK(BM_CurveSerial)->Arg(100)->Arg(1000);
BENCHMARK(BM_CurveParallel)->Arg(100)->Arg(1000);
BENCHMARK(BM_SimulateSerial)->Arg(100000);
BENCHMARK(BM_SimulateParallel)->Arg(100000);
BENCHMARK(BM_JudgeSerial)->Arg(200);
BENCHMARK(BM_JudgeParallel)->Arg(200);

BENCHMARK_MAIN();
