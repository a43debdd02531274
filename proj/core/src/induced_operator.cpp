#include "towerlimits/induced_operator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "towerlimits/errors.hpp"

namespace towerlimits {

namespace {

constexpr int kBlock = 64;  // target cells per work unit; fixed so results do not depend on threads

// Root of x (1 + (2x)^a) = y by Newton started at `guess`, which must not lie left of the root
// (the left branch is convex, so iterates then decrease monotonically).
double left_inverse_from(double y, double guess, double alpha) {
    double x = std::min(guess, 0.5);
    for (int iter = 0; iter < 100; ++iter) {
        const double p = std::pow(2.0 * x, alpha);
        const double g = x * (1.0 + p) - y;
        if (g < 0) return iter == 0 ? lsv_left_inverse(y, alpha) : x;
        const double next = x - g / (1.0 + (1.0 + alpha) * p);
        if (!(next < x) || x - next <= 1e-16 * x) return next > 0 ? next : x;
        x = next;
    }
    return lsv_left_inverse(y, alpha);
}

double left_derivative(double z, double alpha) { return 1.0 + (1.0 + alpha) * std::pow(2.0 * z, alpha); }

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

// Weighted mean and variance of samples with positive weights.
Moments moments(const double* f, const double* w, int count) {
    double sw = 0, sf = 0;
    for (int k = 0; k < count; ++k) {
        sw += w[k];
        sf += w[k] * f[k];
    }
    Moments m;
    m.mean = sf / sw;
    double sv = 0;
    for (int k = 0; k < count; ++k) sv += w[k] * (f[k] - m.mean) * (f[k] - m.mean);
    m.var = std::max(0.0, sv / sw);
    return m;
}

class BlockBuilder {
public:
    BlockBuilder(double alpha, const TowerObservable& f, const InducedOptions& opts, const QuadratureRule& rule)
        : alpha_(alpha), f_(f), opts_(opts), rule_(rule), K_(opts.cells) {}

    // Pieces for target cells [lo, hi), processed from the right.
    std::vector<InducedPiece> run(int lo, int hi) const {
        const int depth = opts_.n_max + 1;
        const int q = opts_.quadrature_points;
        std::vector<InducedPiece> out;
        out.reserve(static_cast<std::size_t>(hi - lo) * depth);

        // Chain of the right boundary of the current cell: z_k(b_{i+1}) for k = 0..depth-1.
        std::vector<double> right(depth), left(depth);
        right[0] = boundary(hi);
        for (int k = 1; k < depth; ++k) right[k] = lsv_left_inverse(right[k - 1], alpha_);

        std::vector<double> z(q), jac(q), fsum(q), fb(q), wt(q), mass(q), ys(q);
        for (int i = hi - 1; i >= lo; --i) {
            const double a = boundary(i), b = boundary(i + 1);
            // Gauss nodes in decreasing order so each Newton solve starts right of its root.
            for (int k = 0; k < q; ++k) {
                const int r = q - 1 - k;
                ys[k] = 0.5 * (a + b) + 0.5 * (b - a) * rule_.nodes[r];
                wt[k] = 0.5 * (b - a) * rule_.weights[r];
                z[k] = ys[k];
                jac[k] = 0.5;
                fsum[k] = 0.0;
            }
            left[0] = a;
            for (int n = 1; n <= depth; ++n) {
                // State: z = z_{n-1}, jac = |h_n'|, fsum = f(z_1) + ... + f(z_{n-1}).
                for (int k = 0; k < q; ++k) {
                    fb[k] = f_(0.5 + 0.5 * z[k]) + fsum[k];
                    mass[k] = std::max(wt[k] * jac[k], std::numeric_limits<double>::min());
                }
                emit(out, i, n, left[n - 1], right[n - 1], a, b, fb.data(), mass.data());
                if (n == depth) break;
                for (int k = 0; k < q; ++k) {
                    const double guess = k == 0 ? right[n] : z[k - 1];
                    z[k] = left_inverse_from(z[k], guess, alpha_);
                    jac[k] /= left_derivative(z[k], alpha_);
                    fsum[k] += f_(z[k]);
                }
                left[n] = left_inverse_from(left[n - 1], z[q - 1], alpha_);
            }
            std::swap(left, right);
        }
        return out;
    }

private:
    double boundary(int i) const { return i >= K_ ? 1.0 : 0.5 + static_cast<double>(i) / (2.0 * K_); }

    // Pieces of branch n over target cell i = [a, b], whose preimage has z-coordinates
    // [zl, zr] (x = (1 + z)/2, source cell j covers z in [j/K, (j+1)/K)).
    void emit(std::vector<InducedPiece>& out, int i, int n, double zl, double zr, double a, double b,
              const double* fb, const double* w) const {
        const int q = opts_.quadrature_points;
        const double width = zr - zl;
        int jl = static_cast<int>(std::floor(zl * K_));
        int jr = static_cast<int>(std::ceil(zr * K_)) - 1;
        jl = std::clamp(jl, 0, K_ - 1);
        jr = std::clamp(jr, jl, K_ - 1);
        // Boundaries within rounding of an endpoint do not split the piece.
        while (jl < jr && (static_cast<double>(jl + 1) / K_ - zl) <= 1e-12 * width) ++jl;
        while (jr > jl && (zr - static_cast<double>(jr) / K_) <= 1e-12 * width) --jr;
        if (jl == jr) {
            const Moments m = moments(fb, w, q);
            out.push_back({i, jl, n, 0, 0.5 * width, m.mean, m.var});
            return;
        }
        double ya = a;
        for (int j = jl; j <= jr; ++j) {
            const double lo = std::max(zl, static_cast<double>(j) / K_);
            const double hi = std::min(zr, static_cast<double>(j + 1) / K_);
            const double yb = j == jr ? b : forward(static_cast<double>(j + 1) / K_, n);
            const Moments m = stats(std::min(ya, yb), std::max(ya, yb), n);
            out.push_back({i, j, n, 0, 0.5 * (hi - lo), m.mean, m.var});
            ya = yb;
        }
    }

    // T^n of the base point x = (1 + z)/2: one doubling step to z, then n - 1 left-branch steps.
    double forward(double z, int n) const {
        for (int k = 1; k < n; ++k) z = z * (1.0 + std::pow(2.0 * z, alpha_));
        return std::min(z, 1.0);
    }

    // Induced-observable moments on the preimage of [ya, yb] under branch n, from scratch.
    Moments stats(double ya, double yb, int n) const {
        const int q = opts_.quadrature_points;
        std::vector<double> fb(q), w(q);
        for (int k = 0; k < q; ++k) {
            double z = 0.5 * (ya + yb) + 0.5 * (yb - ya) * rule_.nodes[k];
            double jac = 0.5, s = 0.0;
            for (int d = 1; d < n; ++d) {
                z = lsv_left_inverse(z, alpha_);
                jac /= left_derivative(z, alpha_);
                s += f_(z);
            }
            fb[k] = f_(0.5 + 0.5 * z) + s;
            w[k] = std::max(rule_.weights[k] * jac, std::numeric_limits<double>::min());
        }
        return moments(fb.data(), w.data(), q);
    }

    double alpha_;
    const TowerObservable& f_;
    const InducedOptions& opts_;
    const QuadratureRule& rule_;
    int K_;
};

}  // namespace

cplx UlamOperator::expectation(const Eigen::VectorXcd& u) const {
    cplx s = 0;
    for (Eigen::Index j = 0; j < u.size(); ++j) s += masses(j) * u(j);
    return s;
}

double UlamOperator::constants_residual() const {
    const Eigen::VectorXcd r = matrix * Eigen::VectorXcd::Ones(cells);
    return (r.array() - 1.0).abs().maxCoeff();
}

InducedTable::InducedTable(const LsvSystem& sys, const TowerObservable& f, const InducedOptions& opts)
    : alpha_(sys.alpha()), opts_(opts) {
    const int K = opts.cells;
    if (K < 64 || (K & (K - 1))) throw InvalidInput("induced operator: K must be a power of two >= 64");
    if (opts.n_max < 2) throw InvalidInput("induced operator: n_max must be >= 2");
    if (opts.quadrature_points < 1 || opts.quadrature_points > 64)
        throw InvalidInput("induced operator: quadrature points must lie in [1, 64]");
    if (opts.deep_points < 1 || opts.deep_points > 64)
        throw InvalidInput("induced operator: deep quadrature points must lie in [1, 64]");
    if (f.kind() != ObservableKind::holder_on_interval)
        throw InvalidInput("induced operator: observable must be a function on [0, 1]");

    const auto bp = lsv_branch_points(alpha_, opts.n_max + 1);
    tail_mass_ = bp.x[opts.n_max];  // |{phi > n_max}| / |B|
    if (tail_mass_ > opts.tail_threshold) {
        std::ostringstream msg;
        msg << "induced operator: branches beyond n_max = " << opts.n_max << " carry a fraction " << tail_mass_
            << " of B (threshold " << opts.tail_threshold << "); increase n_max";
        throw InvalidInput(msg.str());
    }
    if (bp.x[opts.n_max] * K > 1.0)
        throw InvalidInput("induced operator: lumped branches span more than one cell; increase n_max");

    const QuadratureRule rule = gauss_legendre(opts.quadrature_points);
    BlockBuilder builder(alpha_, f, opts_, rule);
    const int blocks = (K + kBlock - 1) / kBlock;
    std::vector<std::vector<InducedPiece>> parts(blocks);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int blk; (blk = next.fetch_add(1)) < blocks;)
            parts[blk] = builder.run(blk * kBlock, std::min(K, (blk + 1) * kBlock));
    };
    const int threads = std::clamp(opts.threads, 1, blocks);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    }
    for (auto& p : parts) pieces_.insert(pieces_.end(), p.begin(), p.end());
    build_deep_branches(f);

    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(pieces_.size());
    for (const auto& pc : pieces_) trip.emplace_back(pc.target, pc.source, 1.0);
    pattern_.resize(K, K);
    pattern_.setFromTriplets(trip.begin(), trip.end(), [](const cplx& a, const cplx&) { return a; });
    pattern_.makeCompressed();
    const int* outer = pattern_.outerIndexPtr();
    const int* inner = pattern_.innerIndexPtr();
    for (auto& pc : pieces_) {
        const int* lo = inner + outer[pc.target];
        const int* hi = inner + outer[pc.target + 1];
        pc.slot = static_cast<int>(std::lower_bound(lo, hi, pc.source) - inner);
    }

    const double w = cell_width();
    std::vector<double> covered(K, 0.0);
    for (const auto& pc : pieces_) covered[pc.source] += moments_of(pc).weight;
    for (int j = 0; j < K; ++j) conservation_error_ = std::max(conservation_error_, std::abs(covered[j] / w - 1.0));
    if (conservation_error_ > 1e-9) {
        std::ostringstream msg;
        msg << "induced operator: source cells not tiled by branch pieces (defect " << conservation_error_ << ")";
        throw NumericalError(msg.str());
    }

    // Stationary masses of the Lebesgue-Ulam matrix by power iteration.
    Eigen::SparseMatrix<double, Eigen::RowMajor> P(K, K);
    {
        std::vector<Eigen::Triplet<double>> tr;
        tr.reserve(pieces_.size());
        for (const auto& pc : pieces_) tr.emplace_back(pc.target, pc.source, moments_of(pc).weight / w);
        P.setFromTriplets(tr.begin(), tr.end());
    }
    Eigen::VectorXd h = Eigen::VectorXd::Constant(K, 1.0 / K);
    for (int iter = 0; iter < 100000; ++iter) {
        Eigen::VectorXd nxt = P * h;
        nxt /= nxt.sum();
        const double delta = (nxt - h).lpNorm<1>();
        h.swap(nxt);
        if (delta <= 1e-15) break;
    }
    stationary_residual_ = (P * h - h).lpNorm<1>();
    if (h.minCoeff() <= 0.0) throw NumericalError("induced operator: stationary masses not positive");
    masses_ = h;
    density_base_mass_ = sys.has_density() ? sys.base_mass() : std::numeric_limits<double>::quiet_NaN();
    // Kac: m(B) = 1 / E_B(phi).
    CompensatedSum<double> ephi;
    for (const auto& pc : pieces_) {
        const double n = pc.branch == opts.n_max + 1 ? deep_return_ : pc.branch;
        ephi.add(masses_(pc.source) * pc.length * n);
    }
    return_mean_ = ephi.value() / w;
    base_mass_ = 1.0 / return_mean_;
}

// Branches n_max+1 .. tail_depth share the target profile of branch n_max+1 and differ by their
// branch-averaged induced observable; everything deeper is placed one step further.
void InducedTable::build_deep_branches(const TowerObservable& f) {
    const int n0 = opts_.n_max + 1;
    const int D = std::max(opts_.tail_depth, n0);
    const QuadratureRule rule = gauss_legendre(opts_.deep_points);
    const int G = opts_.deep_points;

    std::vector<double> xs(D + 2);
    xs[0] = 1.0;
    xs[1] = 0.5;
    for (int k = 2; k <= D + 1; ++k) xs[k] = left_inverse_from(xs[k - 1], xs[k - 1], alpha_);
    const double two_a = std::pow(2.0, alpha_);
    auto length = [&](int n) { return 0.5 * xs[n] * two_a * std::pow(xs[n], alpha_); };  // (x_{n-1} - x_n)/2

    std::vector<double> z(G), jac(G, 0.5), fsum(G, 0.0), wt(G);
    for (int k = 0; k < G; ++k) {
        const int r = G - 1 - k;
        z[k] = 0.75 + 0.25 * rule.nodes[r];
        wt[k] = 0.25 * rule.weights[r];
    }
    deep_mean_.clear();
    deep_weight_.clear();
    for (int n = 1; n <= D; ++n) {
        if (n >= n0) {
            double sw = 0, sf = 0;
            for (int k = 0; k < G; ++k) {
                const double m = wt[k] * jac[k];
                sw += m;
                sf += m * (f(0.5 + 0.5 * z[k]) + fsum[k]);
            }
            deep_mean_.push_back(sf / sw);
            deep_weight_.push_back(length(n));
        }
        if (n == D) break;
        for (int k = 0; k < G; ++k) {
            z[k] = left_inverse_from(z[k], k == 0 ? xs[n] : z[k - 1], alpha_);
            jac[k] /= left_derivative(z[k], alpha_);
            fsum[k] += f(z[k]);
        }
    }
    // Remainder {phi > D}, carried by one more step of the trend.
    const std::size_t last = deep_mean_.size() - 1;
    const double slope = last > 0 ? deep_mean_[last] - deep_mean_[last - 1] : 0.0;
    deep_mean_.push_back(deep_mean_[last] + slope);
    deep_weight_.push_back(0.5 * xs[D]);
    remainder_mass_ = xs[D];

    // Moments of the remainder with the trend m(n) = a + s n continued to infinity. Summation by
    // parts turns them into sums of x_n, and x_n^{-alpha} = A n + B to leading order.
    const double p = 1.0 / alpha_;
    const int M = std::max(1, D / 10);
    const double uD = std::pow(xs[D], -alpha_);
    const double A = (uD - std::pow(xs[D - M], -alpha_)) / M;
    const double B = uD - A * D;
    const double N = D + 1.0, u = A * N + B;
    const double h = std::pow(u, -p), dh = -p * A * std::pow(u, -p - 1.0);
    const double S0 = std::pow(u, 1.0 - p) / (A * (p - 1.0)) + h / 2.0 - dh / 12.0;
    const double S1 = (std::pow(u, 2.0 - p) / (p - 2.0) - B * std::pow(u, 1.0 - p) / (p - 1.0)) / (A * A) +
                      N * h / 2.0 - (h + N * dh) / 12.0;
    const double a = deep_mean_[last] - slope * D, g1 = a + slope * N;
    const double rem[3] = {0.5 * xs[D], 0.5 * (xs[D] * g1 + slope * S0),
                           0.5 * (xs[D] * g1 * g1 + slope * (2.0 * a + slope) * S0 + 2.0 * slope * slope * S1)};

    // Weights relative to the length of the profile branch as resolved by the pieces.
    double profile = 0.0;
    for (const auto& pc : pieces_)
        if (pc.branch == n0) profile += pc.length;
    for (double& wgt : deep_weight_) wgt /= profile;
    profile_mean_ = deep_mean_.front();
    for (int k = 0; k < 3; ++k) deep_phi_[k] = rem[k] / profile;
    deep_return_ = 0.5 * (xs[D] * N + S0) / profile;
    for (std::size_t m = 0; m + 1 < deep_weight_.size(); ++m) deep_return_ += deep_weight_[m] * (n0 + static_cast<double>(m));
    for (std::size_t m = 0; m + 1 < deep_weight_.size(); ++m) {
        deep_phi_[0] += deep_weight_[m];
        deep_phi_[1] += deep_weight_[m] * deep_mean_[m];
        deep_phi_[2] += deep_weight_[m] * deep_mean_[m] * deep_mean_[m];
    }
}

InducedTable::PieceMoments InducedTable::moments_of(const InducedPiece& pc) const {
    if (pc.branch != opts_.n_max + 1) return {pc.length, pc.f_mean, pc.f_mean * pc.f_mean + pc.f_var};
    const double d = pc.f_mean - profile_mean_;
    const double p0 = deep_phi_[0], r1 = deep_phi_[1] / p0, r2 = deep_phi_[2] / p0;
    return {pc.length * p0, d + r1, pc.f_var + d * d + 2.0 * d * r1 + r2};
}

cplx InducedTable::deep_phase(double t, cplx z) const {
    const double rz = std::abs(z), az = std::arg(z);
    const int n0 = opts_.n_max + 1;
    cplx s = 0.0;
    for (std::size_t m = 0; m < deep_weight_.size(); ++m) {
        const int n = n0 + static_cast<int>(m);
        const double mod = rz == 1.0 ? 1.0 : std::pow(rz, n);
        s += deep_weight_[m] * std::polar(mod, n * az + t * deep_mean_[m]);
    }
    return s;
}

cplx InducedTable::piece_phase(const InducedPiece& pc, double t, double rz, double az, cplx deep) const {
    const double damp = std::exp(-0.5 * t * t * pc.f_var);
    if (pc.branch == opts_.n_max + 1) return pc.length * std::polar(damp, t * (pc.f_mean - profile_mean_)) * deep;
    const double mod = (rz == 1.0 ? 1.0 : std::pow(rz, pc.branch)) * damp;
    return pc.length * std::polar(mod, pc.branch * az + t * pc.f_mean);
}

UlamOperator InducedTable::at(double t, cplx z) const {
    UlamOperator op;
    op.cells = cells();
    op.t = t;
    op.z = z;
    op.matrix = pattern_;
    op.masses = masses_;
    op.tail_mass = tail_mass_;
    cplx* val = op.matrix.valuePtr();
    std::fill(val, val + op.matrix.nonZeros(), cplx(0.0));
    const double w = cell_width();
    const double rz = std::abs(z), az = std::arg(z);
    const cplx deep = deep_phase(t, z);
    for (const auto& pc : pieces_) val[pc.slot] += piece_phase(pc, t, rz, az, deep);
    const int* outer = op.matrix.outerIndexPtr();
    const int* inner = op.matrix.innerIndexPtr();
    for (int i = 0; i < op.cells; ++i)
        for (int s = outer[i]; s < outer[i + 1]; ++s) val[s] *= masses_(inner[s]) / (masses_(i) * w);
    return op;
}

cplx InducedTable::base_expectation(double t, cplx z) const {
    const double w = cell_width();
    const double rz = std::abs(z), az = std::arg(z);
    const cplx deep = deep_phase(t, z);
    CompensatedSum<cplx> s;
    for (const auto& pc : pieces_) s.add(masses_(pc.source) / w * piece_phase(pc, t, rz, az, deep));
    return s.value();
}

Eigen::VectorXd InducedTable::induced_average() const {
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(cells());
    for (const auto& pc : pieces_) {
        const auto m = moments_of(pc);
        avg(pc.source) += m.weight * m.mean;
    }
    return avg / cell_width();
}

Eigen::VectorXd InducedTable::transferred_induced() const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(cells());
    for (const auto& pc : pieces_) {
        const auto m = moments_of(pc);
        g(pc.target) += m.weight * m.mean * masses_(pc.source);
    }
    for (int i = 0; i < cells(); ++i) g(i) /= masses_(i) * cell_width();
    return g;
}

double InducedTable::induced_mean() const { return masses_.dot(induced_average()); }

double InducedTable::induced_second_moment() const {
    CompensatedSum<double> s;
    for (const auto& pc : pieces_) {
        const auto m = moments_of(pc);
        s.add(masses_(pc.source) * m.weight * m.second);
    }
    return s.value() / cell_width();
}

int branches_for_tail(double alpha, double tail) {
    if (!(tail > 0 && tail < 0.5)) throw InvalidInput("branches_for_tail: tail must lie in (0, 1/2)");
    double x = 0.5;
    int n = 1;
    while (x > tail || n < 2) {
        x = left_inverse_from(x, x, alpha);
        ++n;
    }
    return n;
}

UlamOperator build_induced_operator(const LsvSystem& sys, const TowerObservable& f, int cells, double t) {
    InducedOptions opts;
    opts.cells = cells;
    return InducedTable(sys, f, opts).at(t);
}

}  // namespace towerlimits
