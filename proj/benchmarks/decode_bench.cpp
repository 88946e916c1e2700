#include <benchmark/benchmark.h>

#include "respec/specdec.hpp"

namespace {

using namespace respec;

struct Fixture {
    TabularARModel target;
    TabularARModel drafter;

    static Fixture make() {
        std::mt19937_64 rng(7);
        const Vocabulary v{16};
        TabularARModel target = TabularARModel::random(v, 2, 1.0, 0.5, rng);
        TabularARModel drafter = TabularARModel::random(v, 1, 1.0, 0.5, rng);
        return {std::move(target), std::move(drafter)};
    }
};

void BM_NaiveDecode(benchmark::State & state) {
    const Fixture fx = Fixture::make();
    uint64_t stream = 0;
    for (auto _ : state) {
        DecodeRng rng = DecodeRng::from_seed(11, stream++);
        GenerateResult r =
            generate(fx.target, fx.drafter, Context{{0, 1}}, SDConfig::off(), 64, rng, -4.0);
        benchmark::DoNotOptimize(r.tokens.data());
        state.counters["tokens"] += static_cast<double>(r.tokens.size());
    }
}
BENCHMARK(BM_NaiveDecode);

void BM_ChainSpecDecode(benchmark::State & state) {
    const Fixture fx = Fixture::make();
    const SDConfig cfg = SDConfig::chain(static_cast<int>(state.range(0)));
    uint64_t stream = 0;
    for (auto _ : state) {
        DecodeRng rng = DecodeRng::from_seed(11, stream++);
        GenerateResult r = generate(fx.target, fx.drafter, Context{{0, 1}}, cfg, 64, rng, -4.0);
        benchmark::DoNotOptimize(r.tokens.data());
        state.counters["tokens"] += static_cast<double>(r.tokens.size());
    }
}
BENCHMARK(BM_ChainSpecDecode)->Arg(2)->Arg(4)->Arg(8);

void BM_TreeSpecDecode(benchmark::State & state) {
    const Fixture fx = Fixture::make();
    const SDConfig cfg = SDConfig::tree(2, static_cast<int>(state.range(0)), 2);
    uint64_t stream = 0;
    for (auto _ : state) {
        DecodeRng rng = DecodeRng::from_seed(11, stream++);
        GenerateResult r = generate(fx.target, fx.drafter, Context{{0, 1}}, cfg, 64, rng, -4.0);
        benchmark::DoNotOptimize(r.tokens.data());
        state.counters["tokens"] += static_cast<double>(r.tokens.size());
    }
}
BENCHMARK(BM_TreeSpecDecode)->Arg(1)->Arg(2)->Arg(3);

} // namespace

BENCHMARK_MAIN();
