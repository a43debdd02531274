#include "towerlimits/tower_operators.hpp"

#include <algorithm>

#include "towerlimits/errors.hpp"

namespace towerlimits {

namespace {

double max_abs(const Eigen::MatrixXcd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TowerOperators tower_operators(const FiniteTower& tower, const TowerObservable& f, double t, int n) {
    if (n < 0) throw InvalidInput("tower_operators: n must be >= 0");
    const int N = tower.state_count();
    const Eigen::MatrixXcd M = tower.twisted_transfer(f, t);
    Eigen::VectorXcd base_mask(N), out_mask(N);
    for (int s = 0; s < N; ++s) {
        base_mask(s) = tower.in_base(s) ? 1.0 : 0.0;
        out_mask(s) = tower.in_base(s) ? 0.0 : 1.0;
    }
    const Eigen::MatrixXcd PB = base_mask.asDiagonal();
    const Eigen::MatrixXcd PO = out_mask.asDiagonal();
    const Eigen::MatrixXcd MPO = M * PO;

    TowerOperators ops;
    ops.t = t;
    ops.R.resize(n + 1);
    ops.T.resize(n + 1);
    ops.A.resize(n + 1);
    ops.B.resize(n + 1);
    ops.C.resize(n + 1);
    Eigen::MatrixXcd pow_mpo = Eigen::MatrixXcd::Identity(N, N);  // (M P_out)^k
    Eigen::MatrixXcd pow_m = Eigen::MatrixXcd::Identity(N, N);
    for (int k = 0; k <= n; ++k) {
        ops.B[k] = PB * pow_mpo;
        ops.C[k] = PO * pow_mpo;
        ops.T[k] = PB * pow_m * PB;
        if (k == 0) {
            ops.R[k] = Eigen::MatrixXcd::Zero(N, N);
            ops.A[k] = PB;
        }
        pow_m = M * pow_m;
        if (k < n) pow_mpo = MPO * pow_mpo;
    }
    Eigen::MatrixXcd prev = Eigen::MatrixXcd::Identity(N, N);  // (M P_out)^{k-1}
    for (int k = 1; k <= n; ++k) {
        const Eigen::MatrixXcd tail = prev * M * PB;
        ops.R[k] = PB * tail;
        ops.A[k] = PO * tail;
        prev = MPO * prev;
    }
    return ops;
}

std::vector<Eigen::MatrixXcd> renewal_from_first_returns(const std::vector<Eigen::MatrixXcd>& R,
                                                         const Eigen::MatrixXcd& base_projection) {
    std::vector<Eigen::MatrixXcd> T(R.size());
    if (R.empty()) return T;
    T[0] = base_projection;
    for (std::size_t n = 1; n < R.size(); ++n) {
        T[n] = Eigen::MatrixXcd::Zero(R[0].rows(), R[0].cols());
        for (std::size_t k = 1; k <= n; ++k) T[n].noalias() += R[k] * T[n - k];
    }
    return T;
}

DecompositionResult decompose_iterate(const FiniteTower& tower, const TowerObservable& f, double t,
                                      int n) {
    if (n < 0 || n > 512) throw InvalidInput("decompose_iterate: n must lie in [0, 512]");
    const TowerOperators ops = tower_operators(tower, f, t, n);
    const auto T = renewal_from_first_returns(ops.R, ops.A[0]);

    DecompositionResult res;
    res.n = n;
    res.t = t;
    for (int k = 0; k <= n; ++k) res.renewal_mismatch = std::max(res.renewal_mismatch, max_abs(T[k] - ops.T[k]));

    const Eigen::MatrixXcd M = tower.twisted_transfer(f, t);
    Eigen::MatrixXcd Mn = Eigen::MatrixXcd::Identity(M.rows(), M.cols());
    for (int k = 0; k < n; ++k) Mn = M * Mn;
    Eigen::MatrixXcd rhs = ops.C[n];
    for (int a = 0; a <= n; ++a)
        for (int k = 0; a + k <= n; ++k) rhs.noalias() += ops.A[a] * T[k] * ops.B[n - a - k];
    res.residual = max_abs(Mn - rhs);
    return res;
}

BoundaryReport boundary_identities(const FiniteTower& tower, std::uint64_t seed, int random_functions) {
    const int N = tower.state_count();
    const int H = tower.max_return_time();
    const Eigen::VectorXd mu = tower.state_mass();

    std::vector<Eigen::VectorXd> panel;
    panel.push_back(Eigen::VectorXd::Ones(N));
    Eigen::VectorXd base = Eigen::VectorXd::Zero(N), level = Eigen::VectorXd::Zero(N);
    for (int s = 0; s < N; ++s) {
        base(s) = tower.in_base(s) ? 1.0 : 0.0;
        level(s) = tower.level_of(s);
    }
    panel.push_back(base);
    panel.push_back(level);
    SplitMix64 rng(stream_key(seed, 0xb0));
    for (int r = 0; r < random_functions; ++r) {
        Eigen::VectorXd v(N);
        for (int s = 0; s < N; ++s) v(s) = 2.0 * rng.uniform() - 1.0;
        panel.push_back(v);
    }

    const auto zero = TowerObservable::cellwise("zero", [&] {
        std::vector<std::vector<double>> z;
        for (const auto& c : tower.cells()) z.emplace_back(c.return_time, 0.0);
        return z;
    }());
    // A_a and B_b vanish once a, b reach the tallest column.
    const TowerOperators ops = tower_operators(tower, zero, 0.0, H + 1);

    BoundaryReport rep;
    rep.panel_size = static_cast<int>(panel.size());
    Eigen::VectorXd sum_a_base = Eigen::VectorXd::Zero(N);
    for (int a = 0; a <= H + 1; ++a) sum_a_base += (ops.A[a] * base.cast<cplx>()).real();
    for (const auto& v : panel) {
        CompensatedSum<double> lhs;
        for (int s = 0; s < N; ++s) lhs.add(mu(s) * sum_a_base(s) * v(s));
        rep.a_identity_error = std::max(rep.a_identity_error, std::abs(lhs.value() - mu.dot(v)));
    }
    for (const auto& u : panel) {
        CompensatedSum<double> lhs;
        for (int b = 0; b <= H + 1; ++b) {
            const Eigen::VectorXd bu = (ops.B[b] * u.cast<cplx>()).real();
            for (int s = 0; s < N; ++s)
                if (tower.in_base(s)) lhs.add(mu(s) * bu(s));
        }
        rep.b_identity_error = std::max(rep.b_identity_error, std::abs(lhs.value() - mu.dot(u)));
    }

    // C_n bound with a non-trivial twist: the bound is uniform in t.
    std::vector<std::vector<double>> wave;
    for (std::size_t i = 0; i < tower.cell_count(); ++i) {
        wave.emplace_back();
        for (int l = 0; l < tower.return_time(i); ++l) wave.back().push_back(std::sin(1.0 + i + 0.7 * l));
    }
    const auto f = TowerObservable::cellwise("wave", wave);
    rep.c_bound_excess = -std::numeric_limits<double>::infinity();
    for (double t : {0.0, 0.37, 1.1}) {
        const TowerOperators tw = tower_operators(tower, f, t, H + 1);
        for (int n = 0; n <= H + 1; ++n) {
            const double bound = tower.mass_missing_base(n);
            for (const auto& u : panel) {
                const Eigen::VectorXcd cu = tw.C[n] * u.cast<cplx>();
                double l1 = 0;
                for (int s = 0; s < N; ++s) l1 += mu(s) * std::abs(cu(s));
                rep.c_bound_excess = std::max(rep.c_bound_excess, l1 - bound * u.cwiseAbs().maxCoeff());
            }
        }
    }
    return rep;
}

}  // namespace towerlimits
