#include "towerlimits/greenkubo.hpp"

#include <algorithm>
#include <cmath>

#include "towerlimits/errors.hpp"

namespace towerlimits {

namespace {

double autocovariance(std::span<const double> y, double mean, long k) {
    const long n = static_cast<long>(y.size());
    if (k >= n) return 0.0;
    CompensatedSum<double> s;
    double block = 0.0;
    // Blocked accumulation keeps the compensated sum cheap.
    for (long i = 0; i + k < n; ++i) {
        block += (y[i] - mean) * (y[i + k] - mean);
        if ((i & 1023) == 1023) {
            s.add(block);
            block = 0.0;
        }
    }
    s.add(block);
    return s.value() / static_cast<double>(n);
}

double windowed_sum(std::span<const double> y, double mean, long window) {
    double s = autocovariance(y, mean, 0);
    for (long k = 1; k <= window; ++k) s += 2.0 * autocovariance(y, mean, k);
    return s;
}

}  // namespace

GreenKuboResult greenkubo_variance(std::span<const double> series, std::uint64_t seed, const GreenKuboOptions& opts) {
    const long n = static_cast<long>(series.size());
    if (n < 4 * static_cast<long>(opts.batches) || n < 16) throw InvalidInput("greenkubo_variance: series too short");
    if (opts.max_lag < 1 || opts.plateau_run < 1 || opts.batches < 2)
        throw InvalidInput("greenkubo_variance: bad options");
    GreenKuboResult res;
    res.length = n;
    res.mean = pairwise_sum(series) / static_cast<double>(n);

    const long max_lag = std::min(opts.max_lag, n / 4);
    res.autocovariance.push_back(autocovariance(series, res.mean, 0));
    double bartlett = res.autocovariance[0] * res.autocovariance[0];  // C_0^2 + 2 sum_{j<k} C_j^2
    int inside = 0;
    long k = 1;
    for (; k <= max_lag; ++k) {
        const double c = autocovariance(series, res.mean, k);
        res.autocovariance.push_back(c);
        const double band = opts.plateau_sigmas * std::sqrt(bartlett / static_cast<double>(n));
        inside = std::abs(c) <= band ? inside + 1 : 0;
        bartlett += 2.0 * c * c;
        if (inside >= opts.plateau_run) {
            res.plateau = true;
            break;
        }
    }
    res.window = res.plateau ? k - opts.plateau_run : max_lag;
    res.autocovariance.resize(res.window + 1);
    res.sigma2 = res.autocovariance[0];
    for (long j = 1; j <= res.window; ++j) res.sigma2 += 2.0 * res.autocovariance[j];

    const long len = n / opts.batches;
    std::vector<double> est(opts.batches);
    for (int b = 0; b < opts.batches; ++b)
        est[b] = windowed_sum(series.subspan(static_cast<std::size_t>(b * len), static_cast<std::size_t>(len)),
                              res.mean, res.window);
    SplitMix64 rng(stream_key(seed, 0xb007));
    double s1 = 0, s2 = 0;
    for (int r = 0; r < opts.bootstrap; ++r) {
        double m = 0;
        for (int b = 0; b < opts.batches; ++b) m += est[rng() % static_cast<std::uint64_t>(opts.batches)];
        m /= opts.batches;
        s1 += m;
        s2 += m * m;
    }
    const double bm = s1 / opts.bootstrap;
    res.standard_error = std::sqrt(std::max(0.0, s2 / opts.bootstrap - bm * bm));
    return res;
}

GreenKuboResult greenkubo_variance(const LsvSystem& sys, const TowerObservable& f, long orbit_length,
                                   std::uint64_t seed, const GreenKuboOptions& opts) {
    if (orbit_length < 1000000) throw InvalidInput("greenkubo_variance: orbit length must be at least 1e6");
    if (f.kind() != ObservableKind::holder_on_interval)
        throw InvalidInput("greenkubo_variance: observable must be a function on [0, 1]");
    std::vector<double> series(static_cast<std::size_t>(orbit_length));
    double x = sys.sample(seed, 0);
    for (long k = 0; k < opts.burn_in; ++k) x = sys.map_unchecked(x);
    for (long k = 0; k < orbit_length; ++k) {
        series[static_cast<std::size_t>(k)] = f(x);
        x = sys.map_unchecked(x);
    }
    return greenkubo_variance(series, seed, opts);
}

}  // namespace towerlimits
