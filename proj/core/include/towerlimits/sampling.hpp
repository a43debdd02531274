#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "towerlimits/finite_tower.hpp"
#include "towerlimits/lsv.hpp"
#include "towerlimits/observable.hpp"

namespace towerlimits {

struct SampleOptions {
    int threads = 1;
    bool keep_endpoints = false;  // record the start point and the point after n steps
};

// count independent Birkhoff sums S_n f. Sample i of stream s is a pure function of
// (seed, s, i), so results do not depend on the thread count.
struct BirkhoffBatch {
    long n = 0;
    std::vector<double> sums;
    std::vector<double> starts;  // x_0 (LSV) or state index (tower), when kept
    std::vector<double> ends;    // T^n x_0 likewise
};

// Starts from LsvSystem::sample.
BirkhoffBatch sample_birkhoff(const LsvSystem& sys, const TowerObservable& f, long n, long count,
                              std::uint64_t seed, std::uint64_t stream, const SampleOptions& opts = {});
// Starts from the invariant state masses; f must be cellwise.
BirkhoffBatch sample_birkhoff(const FiniteTower& tower, const TowerObservable& f, long n, long count,
                              std::uint64_t seed, std::uint64_t stream, const SampleOptions& opts = {});

// Runs body(lo, hi) over [0, count) in fixed chunks of `chunk` indices on up to `threads` workers.
void parallel_chunks(long count, long chunk, int threads, const std::function<void(long, long)>& body);

// sup_x |F_emp(x) - Phi(x / sigma)|; sigma = 0 compares with the point mass at 0.
double ks_distance_normal(std::vector<double> values, double sigma);

// Thread count from TOWERLIMITS_THREADS when set, otherwise the hardware concurrency.
int default_threads();

}  // namespace towerlimits
