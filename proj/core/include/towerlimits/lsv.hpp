#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "towerlimits/numerics.hpp"

namespace towerlimits {

// T(x) = x (1 + 2^a x^a) on [0, 1/2], 2x - 1 on (1/2, 1].
double lsv_map(double x, double alpha);
double lsv_derivative(double x, double alpha);

// Inverse of the left branch: the unique x in [0, 1/2] with x (1 + 2^a x^a) = y, y in [0, 1].
double lsv_left_inverse(double y, double alpha);

// x_0 = 1 > x_1 = 1/2 > x_2 > ... with T(x_{n+1}) = x_n, and y_n = (x_{n-1} + 1)/2 for n >= 1,
// so that B_n = (y_{n+1}, y_n] is the set of base points returning after exactly n steps.
struct BranchPoints {
    std::vector<double> x;  // x[0..n_max]
    std::vector<double> y;  // y[1..n_max+1]; y[0] is NaN
};
BranchPoints lsv_branch_points(double alpha, int n_max);

enum class Measure { lebesgue, invariant };

struct LsvOptions {
    int n_max = 200;
    int k_density = 1 << 14;
    double density_tolerance = 1e-12;
    long density_max_iterations = 200000;
    int decorrelation_steps = 32;
    bool build_density = true;
};

// The LSV map with its first-return partition of B = (1/2, 1] and an Ulam approximation of
// the absolutely continuous invariant density on (0, 1]. Immutable after construction.
class LsvSystem {
public:
    explicit LsvSystem(double alpha, const LsvOptions& opts = {});

    double alpha() const { return alpha_; }
    int n_max() const { return opts_.n_max; }
    const LsvOptions& options() const { return opts_; }
    const BranchPoints& branches() const { return bp_; }
    double x(int n) const { return bp_.x.at(n); }
    double y(int n) const { return bp_.y.at(n); }

    double map(double x) const { return lsv_map(x, alpha_); }
    double map_unchecked(double x) const;

    // Lebesgue length of B_n, computed as (x_{n-1} - x_n)/2 = 2^a x_n^{1+a} / 2 for accuracy.
    double branch_length(int n) const;

    // phi(x) for x in (1/2, 1]: table lookup up to n_max, orbit iteration beyond.
    long return_time(double x) const;

    // Mass of {phi > n} inside B: y_{n+1} - 1/2 = x_n / 2 (Lebesgue) or the integral of the
    // invariant density over (1/2, y_{n+1}].
    double tail_measure(int n, Measure measure = Measure::lebesgue) const;

    // Invariant density as cell averages on the uniform grid of (0, 1] (integrates to 1).
    bool has_density() const { return !density_.empty(); }
    const std::vector<double>& density() const;
    double density_residual() const { return density_residual_; }
    long density_iterations() const { return density_iterations_; }
    double density_integral(double a, double b) const;
    // Integral of g against the invariant density (4-point Gauss rule per cell).
    double integrate(const std::function<double(double)>& g) const;
    double base_mass() const { return density_integral(0.5, 1.0); }

    // Deterministic pseudo-sample from the invariant measure: a function of (seed, index) only.
    double sample(std::uint64_t seed, std::uint64_t index) const;
    std::vector<double> sample_invariant(std::uint64_t seed, std::size_t count,
                                         std::uint64_t first_index = 0) const;
    // Point drawn from the density approximation before decorrelation steps.
    double draw_from_density(SplitMix64& rng) const;

private:
    void build_density();

    double alpha_;
    double two_pow_alpha_;
    LsvOptions opts_;
    BranchPoints bp_;
    std::vector<double> density_;
    std::vector<double> cdf_;  // cumulative cell masses, size K+1
    double density_residual_ = 0.0;
    long density_iterations_ = 0;
};

}  // namespace towerlimits
