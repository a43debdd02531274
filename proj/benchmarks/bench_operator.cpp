#include <benchmark/benchmark.h>

#include "towerlimits/induced_operator.hpp"
#include "towerlimits/observable.hpp"
#include "towerlimits/spectral.hpp"

using namespace towerlimits;

namespace {

InducedOptions options(int cells, double alpha) {
    InducedOptions o;
    o.cells = cells;
    o.n_max = std::max(50, branches_for_tail(alpha, 1e-6));
    return o;
}

void BM_InducedTable(benchmark::State& st) {
    const LsvSystem sys(0.25);
    const auto f = centered(lsv_observable("x", 0.25), sys);
    for (auto _ : st) benchmark::DoNotOptimize(InducedTable(sys, f, options(static_cast<int>(st.range(0)), 0.25)));
}
BENCHMARK(BM_InducedTable)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_TwistedOperator(benchmark::State& st) {
    const LsvSystem sys(0.25);
    const InducedTable tab(sys, centered(lsv_observable("x", 0.25), sys), options(static_cast<int>(st.range(0)), 0.25));
    for (auto _ : st) benchmark::DoNotOptimize(tab.at(0.7, std::polar(1.0, 0.4)));
}
BENCHMARK(BM_TwistedOperator)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_LeadingEigen(benchmark::State& st) {
    const LsvSystem sys(0.25);
    const InducedTable tab(sys, centered(lsv_observable("x", 0.25), sys), options(static_cast<int>(st.range(0)), 0.25));
    const auto op = tab.at(0.3);
    for (auto _ : st) benchmark::DoNotOptimize(leading_eigen(op));
}
BENCHMARK(BM_LeadingEigen)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

}  // namespace
