#include <benchmark/benchmark.h>

#include "towerlimits/finite_tower.hpp"
#include "towerlimits/limit_lab.hpp"
#include "towerlimits/observable.hpp"
#include "towerlimits/sampling.hpp"

using namespace towerlimits;

namespace {

// items/s is LSV steps per second
void BM_LsvBirkhoff(benchmark::State& st) {
    const LsvSystem sys(0.4);
    const auto f = lsv_observable("x", 0.4);
    const long n = st.range(0), count = 1000;
    for (auto _ : st) benchmark::DoNotOptimize(sample_birkhoff(sys, f, n, count, 1, 0));
    st.SetItemsProcessed(st.iterations() * n * count);
}
BENCHMARK(BM_LsvBirkhoff)->Arg(128)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_KsDistance(benchmark::State& st) {
    const LsvSystem sys(0.3);
    const auto batch = sample_birkhoff(sys, centered(lsv_observable("x", 0.3), sys), 64, st.range(0), 2, 0);
    for (auto _ : st) benchmark::DoNotOptimize(ks_distance_normal(batch.sums, 2.0));
}
BENCHMARK(BM_KsDistance)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_LatticeLaw(benchmark::State& st) {
    const auto tower = load_tower(TOWERLIMITS_DATA_DIR "/binomial4.tw");
    const auto q = tower.observable("step");
    const std::vector<long> ns{st.range(0)};
    for (auto _ : st) benchmark::DoNotOptimize(lattice_laws(tower, q, ns));
}
BENCHMARK(BM_LatticeLaw)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

}  // namespace
