#include "towerlimits/sampling.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "towerlimits/errors.hpp"

namespace towerlimits {

namespace {

constexpr long kChunk = 1 << 12;

void check_counts(long n, long count) {
    if (n < 0) throw InvalidInput("sample_birkhoff: n must be >= 0");
    if (count < 1) throw InvalidInput("sample_birkhoff: count must be >= 1");
}

BirkhoffBatch empty_batch(long n, long count, bool endpoints) {
    BirkhoffBatch b;
    b.n = n;
    b.sums.resize(count);
    if (endpoints) {
        b.starts.resize(count);
        b.ends.resize(count);
    }
    return b;
}

}  // namespace

void parallel_chunks(long count, long chunk, int threads, const std::function<void(long, long)>& body) {
    if (count <= 0) return;
    chunk = std::max(1L, chunk);
    const long chunks = (count + chunk - 1) / chunk;
    std::atomic<long> next{0};
    auto worker = [&] {
        for (long c; (c = next.fetch_add(1)) < chunks;) body(c * chunk, std::min(count, (c + 1) * chunk));
    };
    const int workers = static_cast<int>(std::clamp<long>(threads, 1, chunks));
    if (workers == 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
}

BirkhoffBatch sample_birkhoff(const LsvSystem& sys, const TowerObservable& f, long n, long count,
                              std::uint64_t seed, std::uint64_t stream, const SampleOptions& opts) {
    check_counts(n, count);
    if (f.kind() != ObservableKind::holder_on_interval)
        throw InvalidInput("sample_birkhoff: LSV sampling needs a function on [0, 1]");
    BirkhoffBatch b = empty_batch(n, count, opts.keep_endpoints);
    const std::uint64_t key = stream_key(seed, stream);
    parallel_chunks(count, kChunk, opts.threads, [&](long lo, long hi) {
        for (long i = lo; i < hi; ++i) {
            double x = sys.sample(key, static_cast<std::uint64_t>(i));
            if (opts.keep_endpoints) b.starts[i] = x;
            double s = 0.0;
            for (long k = 0; k < n; ++k) {
                s += f(x);
                x = sys.map_unchecked(x);
            }
            b.sums[i] = s;
            if (opts.keep_endpoints) b.ends[i] = x;
        }
    });
    return b;
}

BirkhoffBatch sample_birkhoff(const FiniteTower& tower, const TowerObservable& f, long n, long count,
                              std::uint64_t seed, std::uint64_t stream, const SampleOptions& opts) {
    check_counts(n, count);
    const Eigen::VectorXd val = tower.state_values(f);
    const Eigen::VectorXd mass = tower.state_mass();
    const Eigen::MatrixXd Q = tower.markov_matrix();
    const int S = tower.state_count();
    // Cumulative rows; the last entry is forced to 1 so roundoff cannot fall off the end.
    std::vector<std::vector<double>> cdf(S, std::vector<double>(S));
    std::vector<double> start(S);
    for (int s = 0; s < S; ++s) {
        double acc = 0.0;
        for (int r = 0; r < S; ++r) cdf[s][r] = acc += Q(s, r);
        cdf[s][S - 1] = 1.0;
    }
    {
        double acc = 0.0;
        for (int s = 0; s < S; ++s) start[s] = acc += mass(s) / mass.sum();
        start[S - 1] = 1.0;
    }
    auto draw = [](const std::vector<double>& c, double u) {
        return static_cast<int>(std::upper_bound(c.begin(), c.end(), u) - c.begin());
    };
    BirkhoffBatch b = empty_batch(n, count, opts.keep_endpoints);
    const std::uint64_t key = stream_key(seed, stream);
    parallel_chunks(count, kChunk, opts.threads, [&](long lo, long hi) {
        for (long i = lo; i < hi; ++i) {
            SplitMix64 rng(stream_key(key, static_cast<std::uint64_t>(i)));
            int s = std::min(S - 1, draw(start, rng.uniform()));
            if (opts.keep_endpoints) b.starts[i] = s;
            double sum = 0.0;
            for (long k = 0; k < n; ++k) {
                sum += val(s);
                s = std::min(S - 1, draw(cdf[s], rng.uniform()));
            }
            b.sums[i] = sum;
            if (opts.keep_endpoints) b.ends[i] = s;
        }
    });
    return b;
}

double ks_distance_normal(std::vector<double> values, double sigma) {
    if (values.empty()) throw InvalidInput("ks_distance_normal: no values");
    if (!(sigma >= 0)) throw InvalidInput("ks_distance_normal: sigma must be >= 0");
    const double N = static_cast<double>(values.size());
    if (sigma == 0.0) {
        // Against 1{x >= 0} the supremum sits at 0 from either side.
        const auto neg = std::count_if(values.begin(), values.end(), [](double v) { return v < 0; });
        const auto pos = std::count_if(values.begin(), values.end(), [](double v) { return v > 0; });
        return static_cast<double>(std::max(neg, pos)) / N;
    }
    std::sort(values.begin(), values.end());
    double d = 0.0;
    std::size_t i = 0;
    while (i < values.size()) {
        std::size_t j = i;
        while (j < values.size() && values[j] == values[i]) ++j;  // ties form one jump
        const double F = normal_cdf(values[i], sigma);
        d = std::max({d, std::abs(static_cast<double>(j) / N - F), std::abs(static_cast<double>(i) / N - F)});
        i = j;
    }
    return d;
}

int default_threads() {
    if (const char* env = std::getenv("TOWERLIMITS_THREADS")) {
        const int t = std::atoi(env);
        if (t > 0) return t;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace towerlimits
