#pragma once

#include <Eigen/Dense>

#include <complex>
#include <span>
#include <vector>

#include "towerlimits/numerics.hpp"

namespace towerlimits {

enum class Side { two_sided, causal };

const char* to_string(Side side);
Side side_from_string(std::string_view text);

// Truncated sequence (A_n) for n_min <= n <= n_max whose entries are d x d matrices
// (d = 1 for scalars), tagged with the decay exponent gamma of its algebra.
template <class Scalar>
class BasicWeightedSeq {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using EntryMap = Eigen::Map<Matrix>;
    using ConstEntryMap = Eigen::Map<const Matrix>;

    // All-zero sequence.
    BasicWeightedSeq(long n_min, long n_max, int dim, double gamma, Side side);

    static BasicWeightedSeq delta(int dim, double gamma, Side side);
    static BasicWeightedSeq from_scalars(long n_min, std::span<const Scalar> values, double gamma,
                                         Side side);

    long n_min() const { return n_min_; }
    long n_max() const { return n_max_; }
    std::size_t length() const { return static_cast<std::size_t>(n_max_ - n_min_ + 1); }
    int dim() const { return dim_; }
    double gamma() const { return gamma_; }
    Side side() const { return side_; }
    bool contains(long n) const { return n >= n_min_ && n <= n_max_; }

    EntryMap at(long n);
    ConstEntryMap at(long n) const;
    // Entry n, or the zero matrix outside the support.
    Matrix entry(long n) const;

    Scalar& scalar(long n);
    Scalar scalar(long n) const;

    // Copy restricted to [lo, hi] intersected with the support (zero-filled where needed).
    BasicWeightedSeq window(long lo, long hi) const;

    std::span<const Scalar> raw() const { return data_; }

private:
    std::size_t offset(long n) const;

    long n_min_;
    long n_max_;
    int dim_;
    double gamma_;
    Side side_;
    std::vector<Scalar> data_;  // length * d * d, each entry column-major
};

using WeightedSeq = BasicWeightedSeq<double>;
using ComplexWeightedSeq = BasicWeightedSeq<cplx>;

// Operator norm induced by the max-abs vector norm: the largest absolute row sum.
template <class Derived>
double entry_norm(const Eigen::MatrixBase<Derived>& m) {
    return m.cwiseAbs().rowwise().sum().maxCoeff();
}

// Full Minkowski-sum support; entry n is sum_k a_k b_{n-k} with a on the left.
template <class Scalar>
BasicWeightedSeq<Scalar> convolve(const BasicWeightedSeq<Scalar>& a,
                                  const BasicWeightedSeq<Scalar>& b);

struct AlgebraConstant {
    double gamma = 2.0;
    double c = 0.0;
    long probe_horizon = 0;
    long peak_index = 0;        // argmax of (w*w)_n / w_n on the probe range
    double peak_ratio = 0.0;
    // Accepted because the ratio was still rising but already within 1% of its
    // limit 2*zeta(gamma); c then covers the limit rather than the observed peak.
    bool limit_bound = false;
};

double weight(double gamma, long n);  // (|n|+1)^-gamma

AlgebraConstant compute_algebra_constant(double gamma, long probe_horizon = 10000);

template <class Scalar>
double ogamma_norm(const BasicWeightedSeq<Scalar>& a, const AlgebraConstant& k);

template <class Scalar>
BasicWeightedSeq<Scalar> causal_invert(const BasicWeightedSeq<Scalar>& a, long n_out,
                                       double condition_cap = 1e12);

struct CircleInverseOptions {
    long m_samples = 0;           // 0: pick automatically from support width and n_out
    double singular_floor = 1e-8;
};

// Power of two at least 8x the support width and 4x the output width (limits aliasing).
long default_circle_samples(long support_width, long n_out);

template <class Scalar>
BasicWeightedSeq<Scalar> circle_invert(const BasicWeightedSeq<Scalar>& a, long n_out,
                                       const CircleInverseOptions& opts = {});

// max_n ||(a*b)_n - delta_{n0} I|| over n in [lo, hi].
template <class Scalar>
double identity_residual(const BasicWeightedSeq<Scalar>& ab, long lo, long hi);

struct EnvelopeReport {
    double gamma = 0, d_const = 0, t = 0;
    long n_max = 0;
    double C = 0;            // max over n of LHS_n / envelope_n
    long argmax_n = 0;
    double min_margin = 0;   // min over n of (C - LHS_n / envelope_n) * envelope_n
    std::vector<double> lhs;       // index n + n_max
    std::vector<double> envelope;  // without the factor C
};

// LHS_n = sum_k (|k|+1)^-gamma 1{n-k>=0} t^2 (1 - d t^2)^(n-k) against
// (|n|+1)^-gamma + 1{n>=0} t^2 (1 - d t^2/2)^n for -n_max <= n <= n_max.
EnvelopeReport verify_convolution_envelope(double gamma, double d_const, double t, long n_max);

struct EnvelopeSweep {
    std::vector<EnvelopeReport> points;
    double c_min = 0, c_max = 0;
    double spread() const { return c_min > 0 ? c_max / c_min : 0.0; }
};
EnvelopeSweep sweep_convolution_envelope(double gamma, double d_const, std::span<const double> t_grid,
                                         long n_max);

}  // namespace towerlimits
