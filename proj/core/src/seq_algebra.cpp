#include "towerlimits/seq_algebra.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "towerlimits/errors.hpp"

namespace towerlimits {

const char* to_string(Side side) { return side == Side::causal ? "causal" : "two_sided"; }

Side side_from_string(std::string_view text) {
    if (text == "causal") return Side::causal;
    if (text == "two_sided") return Side::two_sided;
    throw InvalidInput("unknown sequence side '" + std::string(text) + "'");
}

template <class Scalar>
BasicWeightedSeq<Scalar>::BasicWeightedSeq(long n_min, long n_max, int dim, double gamma, Side side)
    : n_min_(n_min), n_max_(n_max), dim_(dim), gamma_(gamma), side_(side) {
    if (dim < 1) throw InvalidInput("sequence entry dimension must be >= 1");
    if (!(gamma > 1.0)) throw InvalidInput("sequence decay exponent gamma must exceed 1");
    if (n_max < n_min) throw InvalidInput("sequence support is empty");
    if (side == Side::causal && n_min != 0)
        throw InvalidInput("causal sequences start at index 0");
    if (side == Side::two_sided && (n_min > 0 || n_max < 0))
        throw InvalidInput("two-sided sequences must contain index 0");
    data_.assign(length() * static_cast<std::size_t>(dim) * dim, Scalar{0});
}

template <class Scalar>
BasicWeightedSeq<Scalar> BasicWeightedSeq<Scalar>::delta(int dim, double gamma, Side side) {
    BasicWeightedSeq s(0, 0, dim, gamma, side);
    s.at(0).setIdentity();
    return s;
}

template <class Scalar>
BasicWeightedSeq<Scalar> BasicWeightedSeq<Scalar>::from_scalars(long n_min,
                                                                std::span<const Scalar> values,
                                                                double gamma, Side side) {
    if (values.empty()) throw InvalidInput("from_scalars: no values");
    BasicWeightedSeq s(n_min, n_min + static_cast<long>(values.size()) - 1, 1, gamma, side);
    std::copy(values.begin(), values.end(), s.data_.begin());
    return s;
}

template <class Scalar>
std::size_t BasicWeightedSeq<Scalar>::offset(long n) const {
    if (!contains(n)) throw InvalidInput("sequence index out of support");
    return static_cast<std::size_t>(n - n_min_) * dim_ * dim_;
}

template <class Scalar>
auto BasicWeightedSeq<Scalar>::at(long n) -> EntryMap {
    return EntryMap(data_.data() + offset(n), dim_, dim_);
}

template <class Scalar>
auto BasicWeightedSeq<Scalar>::at(long n) const -> ConstEntryMap {
    return ConstEntryMap(data_.data() + offset(n), dim_, dim_);
}

template <class Scalar>
auto BasicWeightedSeq<Scalar>::entry(long n) const -> Matrix {
    if (!contains(n)) return Matrix::Zero(dim_, dim_);
    return at(n);
}

template <class Scalar>
Scalar& BasicWeightedSeq<Scalar>::scalar(long n) {
    if (dim_ != 1) throw InvalidInput("scalar access on a matrix-valued sequence");
    return data_[offset(n)];
}

template <class Scalar>
Scalar BasicWeightedSeq<Scalar>::scalar(long n) const {
    if (dim_ != 1) throw InvalidInput("scalar access on a matrix-valued sequence");
    return data_[offset(n)];
}

template <class Scalar>
BasicWeightedSeq<Scalar> BasicWeightedSeq<Scalar>::window(long lo, long hi) const {
    if (side_ == Side::causal) lo = std::max(lo, 0L);
    BasicWeightedSeq out(lo, hi, dim_, gamma_, side_);
    for (long n = std::max(lo, n_min_); n <= std::min(hi, n_max_); ++n) out.at(n) = at(n);
    return out;
}

template <class Scalar>
BasicWeightedSeq<Scalar> convolve(const BasicWeightedSeq<Scalar>& a,
                                  const BasicWeightedSeq<Scalar>& b) {
    if (a.dim() != b.dim()) throw InvalidInput("convolve: entry dimension mismatch");
    if (a.gamma() != b.gamma()) throw InvalidInput("convolve: gamma mismatch");
    const Side side =
        (a.side() == Side::causal && b.side() == Side::causal) ? Side::causal : Side::two_sided;
    BasicWeightedSeq<Scalar> out(a.n_min() + b.n_min(), a.n_max() + b.n_max(), a.dim(), a.gamma(),
                                 side);
    const int d = a.dim();
    if (d == 1) {
        const auto ra = a.raw();
        const auto rb = b.raw();
        for (std::size_t i = 0; i < ra.size(); ++i) {
            const Scalar ai = ra[i];
            if (ai == Scalar{0}) continue;
            Scalar* dst = &out.scalar(out.n_min()) + i;
            for (std::size_t j = 0; j < rb.size(); ++j) dst[j] += ai * rb[j];
        }
        return out;
    }
    for (long n = out.n_min(); n <= out.n_max(); ++n) {
        const long k_lo = std::max(a.n_min(), n - b.n_max());
        const long k_hi = std::min(a.n_max(), n - b.n_min());
        auto dst = out.at(n);
        for (long k = k_lo; k <= k_hi; ++k) dst.noalias() += a.at(k) * b.at(n - k);
    }
    return out;
}

double weight(double gamma, long n) {
    return std::pow(static_cast<double>(std::labs(n)) + 1.0, -gamma);
}

AlgebraConstant compute_algebra_constant(double gamma, long probe_horizon) {
    if (!(gamma > 1.0)) throw InvalidInput("algebra constant: gamma must exceed 1");
    if (probe_horizon < 16) throw InvalidInput("algebra constant: probe horizon must be >= 16");
    std::vector<double> w(probe_horizon + 1);
    for (long n = 0; n <= probe_horizon; ++n) w[n] = weight(gamma, n);

    std::vector<double> ratio(probe_horizon + 1);
    for (long n = 0; n <= probe_horizon; ++n) {
        // Symmetric sum over k <= n/2, smallest terms first.
        CompensatedSum<double> s;
        const long half = n / 2;
        if (n % 2 == 0) s.add(w[half] * w[half]);
        for (long k = (n - 1) / 2; n > 0 && k >= 0; --k) s.add(2.0 * w[k] * w[n - k]);
        ratio[n] = s.value() / w[n];
    }

    AlgebraConstant k;
    k.gamma = gamma;
    k.probe_horizon = probe_horizon;
    const auto it = std::max_element(ratio.begin(), ratio.end());
    k.peak_index = static_cast<long>(it - ratio.begin());
    k.peak_ratio = *it;

    const long quarter_start = probe_horizon - probe_horizon / 4;
    bool non_increasing = true;
    for (long n = quarter_start + 1; n <= probe_horizon; ++n)
        if (ratio[n] > ratio[n - 1] * (1.0 + 1e-14)) non_increasing = false;

    if (non_increasing) {
        k.c = 1.01 * k.peak_ratio;
        return k;
    }
    // Still rising at the horizon. (w*w)_n / w_n tends to 2*zeta(gamma); accept only if the
    // observed peak has essentially reached that limit.
    const double limit = 2.0 * std::riemann_zeta(gamma);
    if (k.peak_ratio >= 0.99 * limit) {
        k.c = 1.01 * std::max(limit, k.peak_ratio);
        k.limit_bound = true;
        return k;
    }
    std::ostringstream msg;
    msg << "algebra constant: (w*w)_n/w_n still increasing at horizon " << probe_horizon
        << " (ratio " << k.peak_ratio << ", limit " << limit << "); gamma=" << gamma
        << " is too close to 1 for this horizon";
    throw NumericalError(msg.str());
}

template <class Scalar>
double ogamma_norm(const BasicWeightedSeq<Scalar>& a, const AlgebraConstant& k) {
    if (a.gamma() != k.gamma) throw InvalidInput("ogamma_norm: gamma mismatch");
    CompensatedSum<double> total;
    double sup_pos = 0.0, sup_neg = 0.0;
    for (long n = a.n_min(); n <= a.n_max(); ++n) {
        const double e = entry_norm(a.at(n));
        total.add(e);
        const double scaled = e / weight(a.gamma(), n);
        if (n >= 0) sup_pos = std::max(sup_pos, scaled);
        if (n <= 0) sup_neg = std::max(sup_neg, scaled);
    }
    const double sum = total.value();
    return (sum + k.c * sup_pos) + (sum + k.c * sup_neg);
}

template <class Scalar>
BasicWeightedSeq<Scalar> causal_invert(const BasicWeightedSeq<Scalar>& a, long n_out,
                                       double condition_cap) {
    using Matrix = typename BasicWeightedSeq<Scalar>::Matrix;
    if (a.side() != Side::causal) throw InvalidInput("causal_invert: sequence is not causal");
    if (n_out < 0) throw InvalidInput("causal_invert: n_out must be >= 0");
    const int d = a.dim();
    const Matrix a0 = a.at(0);
    Eigen::JacobiSVD<Matrix> svd(a0);
    const auto& sv = svd.singularValues();
    const double smax = sv(0), smin = sv(d - 1);
    const double cond = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(cond <= condition_cap)) {
        std::ostringstream msg;
        msg << "causal_invert: leading coefficient is singular or ill-conditioned (condition number "
            << cond << ", cap " << condition_cap << ")";
        throw NumericalError(msg.str());
    }
    const Matrix a0_inv = a0.inverse();

    BasicWeightedSeq<Scalar> b(0, n_out, d, a.gamma(), Side::causal);
    b.at(0) = a0_inv;
    Matrix acc(d, d);
    for (long n = 1; n <= n_out; ++n) {
        acc.setZero();
        const long k_hi = std::min(n, a.n_max());
        for (long k = 1; k <= k_hi; ++k) acc.noalias() += a.at(k) * b.at(n - k);
        b.at(n).noalias() = -a0_inv * acc;
    }
    return b;
}

long default_circle_samples(long support_width, long n_out) {
    const long need = std::max({8 * support_width, 4 * (2 * n_out + 1), 64L});
    long m = 1;
    while (m < need) m <<= 1;
    return m;
}

template <class Scalar>
BasicWeightedSeq<Scalar> circle_invert(const BasicWeightedSeq<Scalar>& a, long n_out,
                                       const CircleInverseOptions& opts) {
    using CMatrix = Eigen::MatrixXcd;
    const long width = a.n_max() - a.n_min();
    const long m = opts.m_samples > 0 ? opts.m_samples : default_circle_samples(width, n_out);
    if (m < 4 * width) throw InvalidInput("circle_invert: m_samples must be >= 4 x support width");
    if (n_out < 0) throw InvalidInput("circle_invert: n_out must be >= 0");
    const int d = a.dim();

    std::vector<cplx> root(m);
    for (long j = 0; j < m; ++j)
        root[j] = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(j) / m);
    auto power = [&](long j, long n) {
        long e = (j * (((n % m) + m) % m)) % m;
        return root[e];
    };

    std::vector<CMatrix> inv(m);
    for (long j = 0; j < m; ++j) {
        CMatrix az = CMatrix::Zero(d, d);
        for (long n = a.n_min(); n <= a.n_max(); ++n)
            az += a.at(n).template cast<cplx>() * power(j, n);
        Eigen::JacobiSVD<CMatrix> svd(az, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const double smin = svd.singularValues()(d - 1);
        if (!(smin > opts.singular_floor)) {
            std::ostringstream msg;
            msg << "circle_invert: A(z) nearly singular at z = exp(2 pi i * " << j << "/" << m
                << ") = " << root[j] << ", smallest singular value " << smin << " (floor "
                << opts.singular_floor << ")";
            throw NumericalError(msg.str());
        }
        inv[j] = svd.solve(CMatrix::Identity(d, d));
    }

    const Side side = Side::two_sided;
    BasicWeightedSeq<Scalar> b(-n_out, n_out, d, a.gamma(), side);
    for (long n = -n_out; n <= n_out; ++n) {
        CMatrix acc = CMatrix::Zero(d, d);
        for (long j = 0; j < m; ++j) acc += inv[j] * power(j, -n);
        acc /= static_cast<double>(m);
        if constexpr (std::is_same_v<Scalar, cplx>)
            b.at(n) = acc;
        else
            b.at(n) = acc.real();
    }
    return b;
}

template <class Scalar>
double identity_residual(const BasicWeightedSeq<Scalar>& ab, long lo, long hi) {
    using Matrix = typename BasicWeightedSeq<Scalar>::Matrix;
    double worst = 0.0;
    const Matrix eye = Matrix::Identity(ab.dim(), ab.dim());
    for (long n = lo; n <= hi; ++n) {
        Matrix e = ab.entry(n);
        if (n == 0) e -= eye;
        worst = std::max(worst, entry_norm(e));
    }
    return worst;
}

EnvelopeReport verify_convolution_envelope(double gamma, double d_const, double t, long n_max) {
    if (!(gamma > 1.0)) throw InvalidInput("envelope: gamma must exceed 1");
    if (!(d_const > 0.0)) throw InvalidInput("envelope: d must be positive");
    if (!(t > 0.0) || t > 1.0 / std::sqrt(d_const) * (1.0 + 1e-12))
        throw InvalidInput("envelope: t must lie in (0, 1/sqrt(d)]");
    if (n_max < 100) throw InvalidInput("envelope: n_max must be >= 100");

    EnvelopeReport r;
    r.gamma = gamma;
    r.d_const = d_const;
    r.t = t;
    r.n_max = n_max;
    const double t2 = t * t;
    const double q = std::max(0.0, 1.0 - d_const * t2);
    const double q_half = 1.0 - 0.5 * d_const * t2;

    // LHS at the far left, sum_{j>=0} w(n_max + j) t^2 q^j, summed until the terms vanish.
    CompensatedSum<double> start;
    double qj = 1.0;
    for (long j = 0;; ++j) {
        const double term = weight(gamma, n_max + j) * t2 * qj;
        start.add(term);
        qj *= q;
        if (term < 1e-300 || qj < 1e-18) break;
    }

    const std::size_t len = static_cast<std::size_t>(2 * n_max + 1);
    r.lhs.resize(len);
    r.envelope.resize(len);
    double lhs = start.value();
    double q_pow = 1.0;
    for (long n = -n_max; n <= n_max; ++n) {
        if (n > -n_max) lhs = weight(gamma, n) * t2 + q * lhs;
        double env = weight(gamma, n);
        if (n >= 0) {
            env += t2 * q_pow;
            q_pow *= q_half;
        }
        r.lhs[n + n_max] = lhs;
        r.envelope[n + n_max] = env;
    }
    r.C = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        const double ratio = r.lhs[i] / r.envelope[i];
        if (ratio > r.C) {
            r.C = ratio;
            r.argmax_n = static_cast<long>(i) - n_max;
        }
    }
    r.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i)
        r.min_margin = std::min(r.min_margin, (r.C - r.lhs[i] / r.envelope[i]) * r.envelope[i]);
    return r;
}

EnvelopeSweep sweep_convolution_envelope(double gamma, double d_const, std::span<const double> t_grid,
                                         long n_max) {
    EnvelopeSweep s;
    s.c_min = std::numeric_limits<double>::infinity();
    for (double t : t_grid) {
        s.points.push_back(verify_convolution_envelope(gamma, d_const, t, n_max));
        s.c_min = std::min(s.c_min, s.points.back().C);
        s.c_max = std::max(s.c_max, s.points.back().C);
    }
    return s;
}

#define TOWERLIMITS_INSTANTIATE(S)                                                               \
    template class BasicWeightedSeq<S>;                                                          \
    template BasicWeightedSeq<S> convolve(const BasicWeightedSeq<S>&, const BasicWeightedSeq<S>&); \
    template double ogamma_norm(const BasicWeightedSeq<S>&, const AlgebraConstant&);             \
    template BasicWeightedSeq<S> causal_invert(const BasicWeightedSeq<S>&, long, double);        \
    template BasicWeightedSeq<S> circle_invert(const BasicWeightedSeq<S>&, long,                 \
                                               const CircleInverseOptions&);                     \
    template double identity_residual(const BasicWeightedSeq<S>&, long, long);

TOWERLIMITS_INSTANTIATE(double)
TOWERLIMITS_INSTANTIATE(cplx)

}  // namespace towerlimits
