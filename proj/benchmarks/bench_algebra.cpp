#include <benchmark/benchmark.h>

#include <cmath>

#include "towerlimits/renewal.hpp"
#include "towerlimits/seq_algebra.hpp"

using namespace towerlimits;

namespace {

WeightedSeq decaying(long lo, long hi, double gamma) {
    WeightedSeq s(lo, hi, 1, gamma, lo < 0 ? Side::two_sided : Side::causal);
    for (long n = lo; n <= hi; ++n) s.scalar(n) = 0.1 * weight(gamma, n) * std::cos(0.3 * n);
    s.scalar(0) += 1.0;
    return s;
}

void BM_Convolve(benchmark::State& st) {
    const long w = st.range(0);
    const auto a = decaying(-w, w, 2.0), b = decaying(-w, w, 2.0);
    for (auto _ : st) benchmark::DoNotOptimize(convolve(a, b));
    st.SetComplexityN(w);
}
BENCHMARK(BM_Convolve)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void BM_CausalInvert(benchmark::State& st) {
    const auto a = decaying(0, 256, 2.0);
    for (auto _ : st) benchmark::DoNotOptimize(causal_invert(a, st.range(0)));
}
BENCHMARK(BM_CausalInvert)->Arg(1000)->Arg(4000);

void BM_CircleInvert(benchmark::State& st) {
    const auto a = decaying(-256, 256, 3.0);
    for (auto _ : st) benchmark::DoNotOptimize(circle_invert(a, st.range(0)));
}
BENCHMARK(BM_CircleInvert)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_Envelope(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(verify_convolution_envelope(1.5, 1.0, 0.3, st.range(0)));
}
BENCHMARK(BM_Envelope)->Arg(1000)->Arg(10000);

void BM_RenewalSolve3x3(benchmark::State& st) {
    const auto spec = load_renewal_spec(TOWERLIMITS_DATA_DIR "/matrix3.rs");
    for (auto _ : st) benchmark::DoNotOptimize(renewal_solve(spec, st.range(0)));
}
BENCHMARK(BM_RenewalSolve3x3)->Arg(1000);

}  // namespace
BENCHMARK_MAIN();
