#include <gtest/gtest.h>

#include <sstream>

#include "towerlimits/errors.hpp"
#include "towerlimits/finite_tower.hpp"
#include "towerlimits/tower_operators.hpp"

using namespace towerlimits;

namespace {

std::string data(const char* name) { return std::string(TOWERLIMITS_DATA_DIR) + "/" + name; }

const char* kCorpus[] = {"two_cell.tw", "single_cell.tw", "pm_one.tw", "binomial4.tw", "three_cell.tw",
                         "long_tail.tw"};

TowerObservable wave(const FiniteTower& t) {
    std::vector<std::vector<double>> v;
    for (std::size_t i = 0; i < t.cell_count(); ++i) {
        v.emplace_back();
        for (int l = 0; l < t.return_time(i); ++l) v.back().push_back(std::cos(0.3 + 1.7 * i - 0.9 * l));
    }
    return TowerObservable::cellwise("wave", v);
}

}  // namespace

TEST(FiniteTower, TwoCellKacNormalization) {
    const auto t = FiniteTower::build({{1.0, 1, {0.5, 0.5}}, {1.0, 2, {0.5, 0.5}}});
    EXPECT_NEAR(t.cell(0).mass, 1.0 / 3.0, 1e-16);
    EXPECT_NEAR(t.cell(1).mass, 1.0 / 3.0, 1e-16);
    EXPECT_EQ(t.state_count(), 3);
    const auto mu = t.state_mass();
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(mu(s), 1.0 / 3.0, 1e-16);
    EXPECT_NEAR(t.total_mass(), 1.0, 1e-15);
}

TEST(FiniteTower, RejectsNonMixingReturnTimes) {
    try {
        FiniteTower::build({{1.0, 2, {0.5, 0.5}}, {1.0, 4, {0.5, 0.5}}});
        FAIL() << "expected InvalidInput";
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("mixing"), std::string::npos);
    }
}

TEST(FiniteTower, RejectsMassLeak) {
    EXPECT_THROW(FiniteTower::build({{1.0, 1, {0.9, 0.1}}, {2.0, 1, {0.5, 0.5}}}), InvalidInput);
    EXPECT_THROW(FiniteTower::build({{1.0, 1, {0.9, 0.2}}, {1.0, 1, {0.5, 0.5}}}), InvalidInput);
    EXPECT_THROW(FiniteTower::build({{1.0, 1, {1.0, 0.0}}, {1.0, 1, {0.0, 1.0}}}), InvalidInput);
}

TEST(FiniteTower, SingleCellFullShift) {
    const auto t = FiniteTower::build({{5.0, 1, {1.0}}});
    EXPECT_EQ(t.cell(0).mass, 1.0);
    EXPECT_EQ(t.transfer_matrix()(0, 0), 1.0);
    EXPECT_EQ(t.base_transfer()(0, 0), 1.0);
}

TEST(FiniteTower, TransferOperatorIsDualToComposition) {
    const auto t = load_tower(data("three_cell.tw"));
    const auto Q = t.markov_matrix();
    const auto P = t.transfer_matrix();
    const auto mu = t.state_mass();
    Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(t.state_count(), -1, 2);
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(t.state_count(), 3, 0.5).array().sin();
    // int (T u) v dmu = int u (v o T) dmu, where v o T is Q v for a Markov chain.
    EXPECT_NEAR(mu.dot((P * u).cwiseProduct(v)), mu.dot(u.cwiseProduct(Q * v)), 1e-15);
    // T fixes constants and preserves mass.
    EXPECT_LE((P * Eigen::VectorXd::Ones(t.state_count()) - Eigen::VectorXd::Ones(t.state_count())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FiniteTower, CorpusParsesAndSatisfiesKac) {
    for (const char* name : kCorpus) {
        const auto t = load_tower(data(name));
        EXPECT_NEAR(t.total_mass(), 1.0, 1e-15) << name;
        EXPECT_EQ(t.return_time_gcd(), 1) << name;
    }
    EXPECT_EQ(load_tower(data("pm_one.tw")).observable("spin").value(1, 0), -1.0);
}

TEST(FiniteTower, TextRoundTrip) {
    const auto t = load_tower(data("two_cell.tw"));
    std::stringstream ss;
    write_tower(ss, t);
    const auto u = read_tower(ss);
    EXPECT_EQ(u.cell_count(), 2u);
    EXPECT_NEAR(u.cell(1).mass, t.cell(1).mass, 1e-16);
    EXPECT_EQ(u.observable("q").value(1, 1), 1.0);
}

TEST(FiniteTower, ParseErrors) {
    std::stringstream bad("cells 2\n1 1 0.5 0.5\n1 x 0.5 0.5\n");
    try {
        read_tower(bad);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.column(), 3);
    }
    std::stringstream gcd("cells 1\n1 2 1\n");
    EXPECT_THROW(read_tower(gcd), ParseError);
    std::stringstream obs("cells 1\n1 1 1\nobs f 0 1 2\n");
    EXPECT_THROW(read_tower(obs), ParseError);
    EXPECT_THROW(load_tower("/nonexistent.tw"), ParseError);
}

TEST(FiniteTower, CenteringUsesInvariantMeasure) {
    const auto t = load_tower(data("two_cell.tw"));
    const auto q = t.centered(t.observable("q"));
    EXPECT_NEAR(t.integrate(q), 0.0, 1e-16);
    EXPECT_NEAR(q.removed_mean(), 2.0 / 3.0, 1e-16);
}

TEST(Decomposition, SingleCellIsExact) {
    const auto t = load_tower(data("single_cell.tw"));
    const auto f = TowerObservable::cellwise("c", {{0.7}});
    for (int n : {0, 1, 5, 30}) {
        const auto ops = tower_operators(t, f, 0.37, n);
        for (int k = 1; k <= n; ++k) EXPECT_EQ(ops.C[k].cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(decompose_iterate(t, f, 0.37, n).residual, 0.0);
    }
}

TEST(Decomposition, TwoCellTower) {
    const auto t = load_tower(data("two_cell.tw"));
    const auto f = t.centered(t.observable("q"));
    EXPECT_LE(decompose_iterate(t, f, 0.0, 10).residual, 1e-13);
    EXPECT_LE(decompose_iterate(t, f, 0.37, 20).residual, 1e-12);
}

TEST(Decomposition, WholeCorpus) {
    for (const char* name : kCorpus) {
        const auto t = load_tower(data(name));
        const auto f = wave(t);
        for (double tt : {0.0, 0.37, 1.1})
            for (int n = 0; n <= 30; ++n) {
                const auto r = decompose_iterate(t, f, tt, n);
                ASSERT_LE(r.residual, 1e-12) << name << " t=" << tt << " n=" << n;
                ASSERT_LE(r.renewal_mismatch, 1e-12) << name << " t=" << tt << " n=" << n;
            }
    }
}

TEST(Decomposition, FirstReturnBlocksMatchBaseFormula) {
    // Independent construction: R_n(t) on base states equals m_i P_ij e^{it f_B(i)} / m_j.
    const auto t = load_tower(data("three_cell.tw"));
    const auto f = t.observable("wave");
    const Eigen::VectorXd fb = t.induced_values(f);
    const double tt = 0.8;
    const auto ops = tower_operators(t, f, tt, 3);
    for (int n = 1; n <= 3; ++n)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                cplx expected = 0;
                if (t.return_time(i) == n)
                    expected = t.cell(i).mass * t.cell(i).row[j] / t.cell(j).mass * std::polar(1.0, tt * fb(i));
                const cplx got = ops.R[n](t.state_index(j, 0), t.state_index(i, 0));
                EXPECT_NEAR(std::abs(got - expected), 0.0, 1e-15);
            }
}

TEST(BoundaryIdentities, ConstantPanels) {
    const auto t = load_tower(data("two_cell.tw"));
    const auto ops = tower_operators(t, wave(t), 0.0, 4);
    const auto mu = t.state_mass();
    Eigen::VectorXcd base(3);
    base << 1, 0, 1;  // states: (0,0), (1,0), (1,1)
    for (int s = 0; s < 3; ++s) base(s) = t.in_base(s) ? 1.0 : 0.0;
    cplx total = 0;
    for (int a = 0; a <= 4; ++a) total += mu.cast<cplx>().dot(ops.A[a] * base);
    EXPECT_NEAR(std::abs(total - 1.0), 0.0, 1e-15);
    cplx total_b = 0;
    const Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(3);
    for (int b = 0; b <= 4; ++b) total_b += mu.cast<cplx>().dot(base.cwiseProduct(ops.B[b] * ones));
    EXPECT_NEAR(std::abs(total_b - 1.0), 0.0, 1e-15);
}

TEST(BoundaryIdentities, WholeCorpus) {
    for (const char* name : kCorpus) {
        const auto rep = boundary_identities(load_tower(data(name)), 42);
        EXPECT_TRUE(rep.ok(1e-14)) << name << " A " << rep.a_identity_error << " B " << rep.b_identity_error
                                   << " C " << rep.c_bound_excess;
    }
}

TEST(BoundaryIdentities, LevelMassBound) {
    const auto t = load_tower(data("long_tail.tw"));
    EXPECT_GT(t.mass_missing_base(0), 0.0);
    EXPECT_EQ(t.mass_missing_base(12), 0.0);
    EXPECT_NEAR(t.mass_missing_base(10), t.cell(5).mass * 2, 1e-18);
}
