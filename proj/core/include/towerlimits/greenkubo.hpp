#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "towerlimits/lsv.hpp"
#include "towerlimits/observable.hpp"

namespace towerlimits {

struct GreenKuboOptions {
    long max_lag = 2000;
    int plateau_run = 10;        // consecutive lags inside the noise band that end the sum
    double plateau_sigmas = 2.0;
    int batches = 32;
    int bootstrap = 1000;
    long burn_in = 1000;         // map steps discarded before recording
};

struct GreenKuboResult {
    double sigma2 = 0.0;
    double standard_error = 0.0;
    long window = 0;                  // last lag included
    bool plateau = false;             // false: the noise band was never reached (warning)
    double mean = 0.0;
    long length = 0;
    std::vector<double> autocovariance;  // C_0 .. C_window
};

// sigma2 = C_0 + 2 sum_{k=1}^{W} C_k from empirical autocovariances of a stationary series, W
// chosen where C_k stays inside the Bartlett noise band. The standard error comes from a
// bootstrap over the estimates of contiguous batches at the same window.
GreenKuboResult greenkubo_variance(std::span<const double> series, std::uint64_t seed,
                                   const GreenKuboOptions& opts = {});

// Same along one orbit of the LSV map started from an invariant sample.
GreenKuboResult greenkubo_variance(const LsvSystem& sys, const TowerObservable& f, long orbit_length,
                                   std::uint64_t seed, const GreenKuboOptions& opts = {});

}  // namespace towerlimits
