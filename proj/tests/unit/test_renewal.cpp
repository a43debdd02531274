#include <gtest/gtest.h>

#include "towerlimits/errors.hpp"
#include "towerlimits/renewal.hpp"

using namespace towerlimits;

namespace {

std::string data(const char* name) { return std::string(TOWERLIMITS_DATA_DIR) + "/" + name; }

RenewalSpec half_half() {
    WeightedSeq R(0, 2, 1, 3.0, Side::causal);
    R.scalar(1) = 0.5;
    R.scalar(2) = 0.5;
    return make_renewal_spec(R, 3.0);
}

WeightedSeq delta_minus(const WeightedSeq& R) {
    WeightedSeq a = R;
    for (long n = 0; n <= a.n_max(); ++n) a.at(n) = -a.at(n);
    a.at(0) += Eigen::MatrixXd::Identity(R.dim(), R.dim());
    return a;
}

}  // namespace

TEST(RenewalSolve, FullShift) {
    WeightedSeq R(0, 1, 1, 3.0, Side::causal);
    R.scalar(1) = 1.0;
    const auto spec = make_renewal_spec(R, 3.0);
    EXPECT_EQ(spec.mu, 1.0);
    const auto T = renewal_solve(spec, 50);
    for (long n = 0; n <= 50; ++n) EXPECT_EQ(T.scalar(n), 1.0);
    const auto rep = verify_renewal_limit(spec, 50);
    for (double e : rep.error) EXPECT_EQ(e, 0.0);
}

TEST(RenewalSolve, HalfHalfByHand) {
    const auto spec = half_half();
    EXPECT_NEAR(spec.mu, 1.5, 1e-15);
    const auto T = renewal_solve(spec, 60);
    // T_n = (T_{n-1} + T_{n-2})/2 by hand.
    EXPECT_EQ(T.scalar(0), 1.0);
    EXPECT_EQ(T.scalar(1), 0.5);
    EXPECT_EQ(T.scalar(2), 0.75);
    EXPECT_EQ(T.scalar(3), 0.625);
    EXPECT_EQ(T.scalar(4), 0.6875);
    EXPECT_NEAR(T.scalar(60), 2.0 / 3.0, 1e-15);
}

TEST(RenewalSolve, TowerSpecMatchesCausalInverse) {
    const auto spec = renewal_spec_from_tower(load_tower(data("two_cell.tw")));
    EXPECT_NEAR(spec.mu, 1.5, 1e-14);
    const auto T = renewal_solve(spec, 200);
    const auto inv = causal_invert(delta_minus(spec.R), 200);
    for (long n = 0; n <= 200; ++n) EXPECT_LE(entry_norm(T.at(n) - inv.at(n)), 1e-12);
}

TEST(RenewalSolve, IsSeriesInversion) {
    for (const char* file : {"matrix3.rs", "three_cell.tw", "long_tail.tw"}) {
        const auto spec = load_renewal_spec(data(file));
        const auto T = renewal_solve(spec, 400);
        EXPECT_LE(identity_residual(convolve(delta_minus(spec.R), T), 0, 400), 1e-12) << file;
    }
}

TEST(RenewalSolve, StochasticScalarBounds) {
    const auto spec = synthetic_renewal_spec(2.5, 2000);
    const auto T = renewal_solve(spec, 2000);
    double cesaro = 0;
    for (long n = 0; n <= 2000; ++n) {
        EXPECT_GE(T.scalar(n), 0.0);
        EXPECT_LE(T.scalar(n), 1.0);
        cesaro += T.scalar(n);
    }
    EXPECT_NEAR(cesaro / 2001, 1.0 / spec.mu, 5e-3);
}

TEST(RenewalSpecs, Validation) {
    WeightedSeq R(0, 2, 1, 3.0, Side::causal);
    R.scalar(0) = 0.1;
    R.scalar(1) = 0.9;
    EXPECT_THROW(make_renewal_spec(R, 3.0), InvalidInput);
    R.scalar(0) = 0.0;
    R.scalar(1) = 0.5;
    EXPECT_THROW(make_renewal_spec(R, 3.0), InvalidInput);  // R(1) = 0.5
    const auto m = load_renewal_spec(data("matrix3.rs"));
    EXPECT_EQ(m.R.dim(), 3);
    EXPECT_NEAR((m.P * m.P - m.P).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(RenewalLimit, TailExponentTwoPointFive) {
    const auto spec = load_renewal_spec(data("beta25.rs"));
    const auto rep = verify_renewal_limit(spec, 10000);
    EXPECT_NEAR(rep.exponent, 1.5, 0.2);
    EXPECT_LT(rep.error.back(), rep.error[100]);
}

TEST(RenewalLimit, FiniteTowerReachesFloor) {
    const auto rep = verify_renewal_limit(renewal_spec_from_tower(load_tower(data("two_cell.tw"))), 200);
    ASSERT_GE(rep.floor_reached_at, 0);
    EXPECT_LE(rep.floor_reached_at, 50);
}

TEST(PerturbedEnvelope, CenteredLatticeTwist) {
    const auto fam = centered_lattice_family(half_half());
    std::vector<double> grid;
    for (int i = -30; i <= 30; ++i) grid.push_back(0.01 * i);
    const auto rep = verify_perturbed_envelope(fam, grid, 1000);
    // lambda(t) = (e^{-it/2} + e^{it/2})/2 = cos(t/2), so M(t)/t^2 -> 1/8.
    EXPECT_NEAR(rep.curvature.real(), 0.125, 1e-6);
    EXPECT_NEAR(rep.curvature.imag(), 0.0, 1e-9);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(std::abs(rep.lambda[i] - std::cos(grid[i] / 2)), 0.0, 1e-14);
    EXPECT_TRUE(std::isfinite(rep.C));
    EXPECT_GE(rep.min_margin, 0.0);
    EXPECT_TRUE(rep.stable()) << rep.C << " vs " << rep.C_doubled;
}

TEST(PerturbedEnvelope, ZeroTwistReducesToRenewalLimit) {
    const auto spec = half_half();
    const auto fam = centered_lattice_family(spec);
    const auto rep = verify_perturbed_envelope(fam, {0.0, 0.1}, 200);
    const auto lim = verify_renewal_limit(spec, 200);
    for (long n = 1; n <= 200; ++n) EXPECT_NEAR(rep.lhs[0][n - 1], lim.error[n], 1e-15);
}

TEST(PerturbedEnvelope, UncenteredTwistIsRejected) {
    std::vector<double> c{0, 1, 2};
    const auto fam = scalar_twist_family(half_half(), c);
    EXPECT_THROW(verify_perturbed_envelope(fam, {0.0, 0.1}, 100), NumericalError);
}

TEST(PerturbedEnvelope, TowerFamily) {
    const auto tower = load_tower(data("three_cell.tw"));
    const auto f = tower.centered(tower.observable("wave"));
    std::vector<double> grid;
    for (int i = -10; i <= 10; ++i) grid.push_back(0.03 * i);
    const auto rep = verify_perturbed_envelope(tower_family(tower, f), grid, 300);
    EXPECT_GT(rep.curvature.real(), 0.0);
    EXPECT_GE(rep.min_margin, 0.0);
    EXPECT_TRUE(rep.stable());
}
