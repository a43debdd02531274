#include "towerlimits/lsv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "towerlimits/errors.hpp"

namespace towerlimits {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 0.5))
        throw InvalidInput("LSV parameter alpha must lie in (0, 1/2)");
}

}  // namespace

double lsv_map(double x, double alpha) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("lsv_map: x must lie in [0, 1]");
    if (x <= 0.5) return x * (1.0 + std::pow(2.0 * x, alpha));
    return 2.0 * x - 1.0;
}

double lsv_derivative(double x, double alpha) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("lsv_derivative: x must lie in [0, 1]");
    if (x <= 0.5) return 1.0 + (1.0 + alpha) * std::pow(2.0 * x, alpha);
    return 2.0;
}

double lsv_left_inverse(double y, double alpha) {
    if (!(y >= 0.0 && y <= 1.0)) throw InvalidInput("lsv_left_inverse: y must lie in [0, 1]");
    if (y == 0.0) return 0.0;
    if (y == 1.0) return 0.5;
    // g(x) = x + (2x)^a x - y is increasing and convex on [0, 1/2]: Newton started to the right
    // of the root decreases monotonically onto it. Bisection guards against stalls.
    double lo = 0.0, hi = std::min(y, 0.5);
    double x = hi;
    for (int iter = 0; iter < 200; ++iter) {
        const double p = std::pow(2.0 * x, alpha);
        const double g = x * (1.0 + p) - y;
        if (g > 0)
            hi = x;
        else
            lo = x;
        const double dg = 1.0 + (1.0 + alpha) * p;
        double next = x - g / dg;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-16 * x || next == x) {
            x = next;
            break;
        }
        x = next;
    }
    if (!(x >= 0.0 && x <= 0.5)) throw NumericalError("lsv_left_inverse: root bracket failure");
    return x;
}

BranchPoints lsv_branch_points(double alpha, int n_max) {
    check_alpha(alpha);
    if (n_max < 2) throw InvalidInput("lsv_branch_points: n_max must be >= 2");
    BranchPoints bp;
    bp.x.resize(n_max + 1);
    bp.y.resize(n_max + 2);
    bp.x[0] = 1.0;
    bp.x[1] = 0.5;
    for (int n = 1; n < n_max; ++n) bp.x[n + 1] = lsv_left_inverse(bp.x[n], alpha);
    bp.y[0] = std::numeric_limits<double>::quiet_NaN();
    for (int n = 0; n <= n_max; ++n) bp.y[n + 1] = 0.5 * (bp.x[n] + 1.0);
    for (int n = 1; n <= n_max; ++n)
        if (!(bp.x[n] < bp.x[n - 1]) || !(bp.x[n] > 0.0))
            throw NumericalError("lsv_branch_points: branch points lost monotonicity at n=" +
                                 std::to_string(n));
    return bp;
}

LsvSystem::LsvSystem(double alpha, const LsvOptions& opts)
    : alpha_(alpha), two_pow_alpha_(std::pow(2.0, alpha)), opts_(opts) {
    check_alpha(alpha);
    if (opts.k_density < 64 || (opts.k_density & (opts.k_density - 1)))
        throw InvalidInput("LsvSystem: k_density must be a power of two >= 64");
    bp_ = lsv_branch_points(alpha, opts.n_max);
    if (opts.build_density) build_density();
}

double LsvSystem::map_unchecked(double x) const {
    if (x <= 0.5) return x * (1.0 + std::pow(2.0 * x, alpha_));
    return 2.0 * x - 1.0;
}

double LsvSystem::branch_length(int n) const {
    if (n < 1 || n > n_max()) throw InvalidInput("branch_length: n out of range");
    if (n == 1) return 0.25;
    return 0.5 * two_pow_alpha_ * std::pow(bp_.x[n], 1.0 + alpha_);
}

long LsvSystem::return_time(double x) const {
    if (!(x > 0.5 && x <= 1.0)) throw InvalidInput("return_time: x must lie in (1/2, 1]");
    const auto& y = bp_.y;
    const int nm = n_max();
    if (x > y[nm + 1]) {
        // Largest n in [1, n_max] with x <= y[n]; y is decreasing.
        int lo = 1, hi = nm;
        while (lo < hi) {
            const int mid = (lo + hi + 1) / 2;
            if (x <= y[mid])
                lo = mid;
            else
                hi = mid - 1;
        }
        return lo;
    }
    // Deep branch: follow the orbit until it re-enters B.
    double u = 2.0 * x - 1.0;
    long n = 1;
    while (u <= 0.5) {
        if (u <= 0.0) throw NumericalError("return_time: orbit reached the neutral fixed point");
        u = u * (1.0 + std::pow(2.0 * u, alpha_));
        ++n;
    }
    return n;
}

double LsvSystem::tail_measure(int n, Measure measure) const {
    if (n < 0 || n >= n_max()) throw InvalidInput("tail_measure: n must lie in [0, n_max)");
    if (measure == Measure::lebesgue) return 0.5 * bp_.x[n];
    return density_integral(0.5, bp_.y[n + 1]);
}

const std::vector<double>& LsvSystem::density() const {
    if (density_.empty()) throw InvalidInput("LsvSystem was built without a density");
    return density_;
}

void LsvSystem::build_density() {
    const int K = opts_.k_density;
    const double h = 1.0 / K;
    // Transition weights target <- source, K * |c_i cap T^{-1} c_j|.
    std::vector<int> row_start(K + 1, 0);
    std::vector<int> src;
    std::vector<double> wt;
    src.reserve(4 * K);
    wt.reserve(4 * K);

    std::vector<double> g(K + 1);
    for (int j = 0; j <= K; ++j) g[j] = lsv_left_inverse(j * h, alpha_);

    for (int j = 0; j < K; ++j) {
        row_start[j] = static_cast<int>(src.size());
        const double a = g[j], b = g[j + 1];
        int i = std::min(static_cast<int>(a * K), K - 1);
        for (; i < K && i * h < b; ++i) {
            const double len = std::min(b, (i + 1) * h) - std::max(a, i * h);
            if (len > 0) {
                src.push_back(i);
                wt.push_back(K * len);
            }
        }
        src.push_back((K + j) / 2);
        wt.push_back(0.5);
    }
    row_start[K] = static_cast<int>(src.size());

    std::vector<double> v(K), next(K);
    for (int i = 0; i < K; ++i) v[i] = std::pow((i + 0.5) * h, -alpha_);
    auto normalize = [&](std::vector<double>& u) {
        const double s = pairwise_sum(u) * h;
        for (double& e : u) e /= s;
    };
    normalize(v);
    double residual = std::numeric_limits<double>::infinity();
    long iter = 0;
    for (; iter < opts_.density_max_iterations; ++iter) {
        for (int j = 0; j < K; ++j) {
            double s = 0;
            for (int p = row_start[j]; p < row_start[j + 1]; ++p) s += wt[p] * v[src[p]];
            next[j] = s;
        }
        normalize(next);
        residual = 0;
        for (int j = 0; j < K; ++j) residual += std::abs(next[j] - v[j]) * h;
        v.swap(next);
        if (residual < opts_.density_tolerance) break;
    }
    density_residual_ = residual;
    density_iterations_ = iter + 1;
    if (!(residual < opts_.density_tolerance)) {
        std::ostringstream msg;
        msg << "invariant density power iteration did not converge: L1 residual " << residual
            << " after " << iter << " iterations";
        throw NumericalError(msg.str());
    }
    density_ = std::move(v);
    cdf_.assign(K + 1, 0.0);
    CompensatedSum<double> acc;
    for (int i = 0; i < K; ++i) {
        acc.add(density_[i] * h);
        cdf_[i + 1] = acc.value();
    }
    for (double& c : cdf_) c /= cdf_[K];
}

double LsvSystem::density_integral(double a, double b) const {
    const auto& d = density();
    const int K = static_cast<int>(d.size());
    a = std::clamp(a, 0.0, 1.0);
    b = std::clamp(b, 0.0, 1.0);
    if (b <= a) return 0.0;
    const int ia = std::min(static_cast<int>(a * K), K - 1);
    const int ib = std::min(static_cast<int>(b * K), K - 1);
    if (ia == ib) return d[ia] * (b - a);
    double s = d[ia] * ((ia + 1.0) / K - a) + d[ib] * (b - static_cast<double>(ib) / K);
    s += (cdf_[ib] - cdf_[ia + 1]);
    return s;
}

double LsvSystem::integrate(const std::function<double(double)>& g) const {
    static const QuadratureRule rule = gauss_legendre(4);
    const auto& d = density();
    const int K = static_cast<int>(d.size());
    const double h = 1.0 / K;
    CompensatedSum<double> total;
    for (int i = 0; i < K; ++i) {
        double s = 0;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q)
            s += rule.weights[q] * g((i + 0.5 * (1.0 + rule.nodes[q])) * h);
        total.add(d[i] * 0.5 * h * s);
    }
    return total.value();
}

double LsvSystem::draw_from_density(SplitMix64& rng) const {
    const int K = static_cast<int>(density().size());
    const double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    int cell = static_cast<int>(it - cdf_.begin()) - 1;
    cell = std::clamp(cell, 0, K - 1);
    // (cell + v)/K with v in (0, 1]: stays inside the left-open cell and away from 0.
    const double v = 1.0 - rng.uniform();
    return (cell + v) / K;
}

double LsvSystem::sample(std::uint64_t seed, std::uint64_t index) const {
    SplitMix64 rng(stream_key(seed, index));
    double x = draw_from_density(rng);
    for (int k = 0; k < opts_.decorrelation_steps; ++k) x = map_unchecked(x);
    return x;
}

std::vector<double> LsvSystem::sample_invariant(std::uint64_t seed, std::size_t count,
                                                std::uint64_t first_index) const {
    if (count < 1) throw InvalidInput("sample_invariant: count must be >= 1");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = sample(seed, first_index + i);
    return out;
}

}  // namespace towerlimits
