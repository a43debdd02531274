#include "towerlimits/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "towerlimits/errors.hpp"

namespace towerlimits {

namespace {

struct RitzPair {
    cplx theta = 0.0;
    Eigen::VectorXcd x;
    double second = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

constexpr double kSecondTolerance = 1e-9;

template <class Apply>
RitzPair subspace_iteration(Apply apply, Eigen::Index n, const EigenOptions& opts, std::uint64_t seed) {
    const Eigen::Index s = std::min<Eigen::Index>(std::max(opts.block, 1), n);
    Eigen::MatrixXcd V(n, s);
    SplitMix64 rng(stream_key(seed, 0xe1));
    V.col(0).setOnes();
    for (Eigen::Index c = 1; c < s; ++c)
        for (Eigen::Index r = 0; r < n; ++r) V(r, c) = cplx(rng.uniform() - 0.5, rng.uniform() - 0.5);

    RitzPair best;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(V);
        const Eigen::MatrixXcd Q = qr.householderQ() * Eigen::MatrixXcd::Identity(n, s);
        const Eigen::MatrixXcd Y = apply(Q);
        const Eigen::MatrixXcd H = Q.adjoint() * Y;
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(H);
        std::vector<Eigen::Index> order(s);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
        });
        const Eigen::VectorXcd u = es.eigenvectors().col(order[0]);
        best.theta = es.eigenvalues()(order[0]);
        best.x = Q * u;
        best.residual = (Y * u - best.theta * best.x).norm() / best.x.norm();
        best.second = s > 1 ? std::abs(es.eigenvalues()(order[1])) : 0.0;
        best.iterations = it;
        bool second_done = true;
        if (opts.resolve_second && s > 1) {
            const Eigen::VectorXcd u2 = es.eigenvectors().col(order[1]);
            const Eigen::VectorXcd x2 = Q * u2;
            const cplx th2 = es.eigenvalues()(order[1]);
            second_done = (Y * u2 - th2 * x2).norm() / x2.norm() <= kSecondTolerance * std::max(1.0, std::abs(best.theta));
        }
        if (second_done && best.residual <= opts.tolerance * std::max(1.0, std::abs(best.theta))) return best;
        V = Y;
    }
    std::ostringstream msg;
    msg << "leading_eigen: no convergence after " << opts.max_iterations << " iterations (residual "
        << best.residual << ")";
    throw NumericalError(msg.str());
}

}  // namespace

EigenResult leading_eigen(const SparseOperator& R, const Eigen::VectorXd& masses, const EigenOptions& opts) {
    if (R.rows() != R.cols() || R.rows() == 0) throw InvalidInput("leading_eigen: square nonempty operator required");
    if (masses.size() != R.rows()) throw InvalidInput("leading_eigen: masses do not match the operator");
    const auto right = subspace_iteration([&](const Eigen::MatrixXcd& Q) -> Eigen::MatrixXcd { return R * Q; },
                                          R.rows(), opts, 1);
    EigenResult res;
    res.lambda = right.theta;
    res.second_modulus = right.second;
    res.residual = right.residual;
    res.iterations = right.iterations;
    if (opts.require_gap && res.second_modulus > std::abs(res.lambda) - opts.gap) {
        std::ostringstream msg;
        msg << "leading_eigen: no spectral gap (|lambda_1| = " << std::abs(res.lambda)
            << ", |lambda_2| = " << res.second_modulus << ")";
        throw NumericalError(msg.str());
    }
    res.right = right.x;
    const cplx mean = (masses.cast<cplx>().array() * res.right.array()).sum();
    res.right /= std::abs(mean) > 1e-8 * res.right.norm() ? mean : cplx(res.right.norm());
    if (!opts.compute_left) return res;

    const SparseOperator Rt = R.transpose();
    const auto left = subspace_iteration([&](const Eigen::MatrixXcd& Q) -> Eigen::MatrixXcd { return Rt * Q; },
                                         R.rows(), opts, 2);
    res.left = left.x;
    const cplx pairing = res.left.transpose() * res.right;
    if (std::abs(pairing) < 1e-14 * res.left.norm() * res.right.norm())
        throw NumericalError("leading_eigen: left and right eigenvectors are orthogonal");
    res.left /= pairing;
    // Two-sided Rayleigh quotient: error quadratic in the eigenvector residuals.
    res.lambda = res.left.transpose() * (R * res.right);
    res.iterations = std::max(res.iterations, left.iterations);
    return res;
}

EigenResult leading_eigen(const UlamOperator& op, const EigenOptions& opts) {
    return leading_eigen(op.matrix, op.masses, opts);
}

PoissonResult solve_poisson_transferred(const Eigen::SparseMatrix<double, Eigen::RowMajor>& R,
                                        const Eigen::VectorXd& masses, Eigen::VectorXd g, PoissonMethod method,
                                        double tolerance) {
    const Eigen::Index n = R.rows();
    if (R.cols() != n || masses.size() != n || g.size() != n)
        throw InvalidInput("solve_poisson: operator, masses and right-hand side sizes differ");
    const Eigen::VectorXd m = masses / masses.sum();
    g.array() -= m.dot(g);
    if (method == PoissonMethod::automatic) method = n <= 1024 ? PoissonMethod::direct : PoissonMethod::neumann;

    PoissonResult res;
    res.method = method;
    if (method == PoissonMethod::direct) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(R);
        A += Eigen::VectorXd::Ones(n) * m.transpose();
        res.a = A.partialPivLu().solve(g);
    } else {
        res.a = g;
        Eigen::VectorXd term = g;
        double prev = term.lpNorm<Eigen::Infinity>();
        int slow = 0;
        for (int k = 1;; ++k) {
            term = R * term;
            term.array() -= m.dot(term);
            res.a += term;
            const double now = term.lpNorm<Eigen::Infinity>();
            const double rho = prev > 0 ? now / prev : 0.0;
            res.terms = k;
            if (now == 0.0 || (rho < 1.0 && now * rho / (1.0 - rho) <= tolerance * std::max(1.0, res.a.lpNorm<Eigen::Infinity>())))
                break;
            slow = rho >= 1.0 ? slow + 1 : 0;
            if (slow > 50 || k >= 100000)
                throw NumericalError("solve_poisson: Neumann series does not converge (no spectral gap)");
            prev = now;
        }
    }
    res.a.array() -= m.dot(res.a);
    res.residual = (res.a - R * res.a - g).lpNorm<Eigen::Infinity>();
    if (res.residual > 1e-9 * std::max(1.0, g.lpNorm<Eigen::Infinity>())) {
        std::ostringstream msg;
        msg << "solve_poisson: residual " << res.residual << " above 1e-9";
        throw NumericalError(msg.str());
    }
    return res;
}

PoissonResult solve_poisson(const Eigen::SparseMatrix<double, Eigen::RowMajor>& R, const Eigen::VectorXd& masses,
                            const Eigen::VectorXd& fB, PoissonMethod method) {
    if (fB.size() != R.cols()) throw InvalidInput("solve_poisson: fB does not match the operator");
    return solve_poisson_transferred(R, masses, R * fB, method);
}

PoissonResult solve_poisson(const UlamOperator& op0, const Eigen::VectorXd& fB, PoissonMethod method) {
    if (op0.t != 0.0 || op0.z != 1.0) throw InvalidInput("solve_poisson: needs the unperturbed operator");
    const Eigen::SparseMatrix<double, Eigen::RowMajor> R = op0.matrix.real();
    return solve_poisson(R, op0.masses, fB, method);
}

std::vector<double> geometric_grid(double t0, double ratio, int count) {
    if (!(t0 > 0) || !(ratio > 0 && ratio < 1) || count < 1) throw InvalidInput("geometric_grid: bad arguments");
    std::vector<double> t(count);
    for (int k = 0; k < count; ++k) t[k] = t0 * std::pow(ratio, k);
    return t;
}

CurvatureFit variance_from_curvature(const SpectralData& sd, double relative_tolerance) {
    std::vector<std::pair<double, double>> pts;  // (t, (1 - Re lambda)/t^2)
    for (std::size_t k = 0; k < sd.t.size(); ++k)
        if (sd.t[k] > 0) pts.emplace_back(sd.t[k], (1.0 - sd.lambda[k].real()) / (sd.t[k] * sd.t[k]));
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (pts.size() < 3) throw InvalidInput("variance_from_curvature: need at least three positive t values");
    const double r = pts[1].first / pts[0].first;
    for (std::size_t k = 1; k < pts.size(); ++k)
        if (std::abs(pts[k].first / pts[k - 1].first - r) > 1e-6 * r)
            throw InvalidInput("variance_from_curvature: t values must form a geometric grid");
    if (!(sd.m_B > 0)) throw PreconditionError("variance_from_curvature: base mass m(B) unavailable");

    // Richardson table in powers of t^2.
    const std::size_t N = pts.size();
    std::vector<std::vector<double>> T(N);
    CurvatureFit fit;
    for (std::size_t k = 0; k < N; ++k) {
        T[k].push_back(pts[k].second);
        for (std::size_t m = 1; m <= k; ++m) {
            const double f = std::pow(r, 2.0 * m);
            T[k].push_back((T[k][m - 1] - f * T[k - 1][m - 1]) / (1.0 - f));
        }
        fit.extrapolants.push_back(2.0 * sd.m_B * T[k][k]);
    }
    fit.sigma2 = fit.extrapolants.back();
    fit.error = std::abs(fit.extrapolants[N - 1] - fit.extrapolants[N - 2]);
    fit.converged = fit.error <= relative_tolerance * std::abs(fit.sigma2) + 1e-10;
    return fit;
}

double variance_from_derivatives(const SpectralData& sd) {
    if (!(sd.m_B > 0)) throw PreconditionError("variance_from_derivatives: base mass m(B) unavailable");
    return sd.m_B * (sd.second_induced - sd.mean_induced * sd.mean_induced + 2.0 * sd.a_dot_f);
}

SpectralData spectral_data(const InducedTable& table, const std::vector<double>& t_grid, const EigenOptions& opts) {
    SpectralData sd;
    sd.m_B = table.base_mass();
    sd.masses = table.masses();
    for (double t : t_grid) {
        const auto e = leading_eigen(table.at(t), opts);
        sd.t.push_back(t);
        sd.lambda.push_back(e.lambda);
        sd.second_modulus.push_back(e.second_modulus);
    }
    const Eigen::SparseMatrix<double, Eigen::RowMajor> R0 = table.at(0.0).matrix.real();
    const auto pr = solve_poisson_transferred(R0, sd.masses, table.transferred_induced());
    sd.a = pr.a;
    sd.poisson_residual = pr.residual;
    sd.f_average = table.induced_average();
    CompensatedSum<double> af;
    for (Eigen::Index j = 0; j < sd.a.size(); ++j) af.add(sd.masses(j) * sd.f_average(j) * sd.a(j));
    sd.a_dot_f = af.value();
    sd.mean_induced = table.induced_mean();
    sd.second_induced = table.induced_second_moment();
    sd.sigma2 = variance_from_derivatives(sd);
    if (sd.t.size() >= 3) sd.curvature = variance_from_curvature(sd);
    if (sd.sigma2 > 0)
        for (const cplx& l : sd.lambda) sd.L.push_back((1.0 - l) * 2.0 * sd.m_B / sd.sigma2);
    return sd;
}

double eigenvalue_expansion_residual(const InducedTable& table, const SpectralData& sd, double t,
                                     const EigenOptions& opts) {
    const cplx lambda = leading_eigen(table.at(t), opts).lambda;
    const cplx expansion = table.base_expectation(t) - t * t * sd.a_dot_f;
    return std::abs(lambda - expansion);
}

}  // namespace towerlimits
