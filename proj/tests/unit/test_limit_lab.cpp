#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "towerlimits/config.hpp"
#include "towerlimits/errors.hpp"
#include "towerlimits/limit_lab.hpp"
#include "towerlimits/report.hpp"
#include "towerlimits/sampling.hpp"

using namespace towerlimits;

namespace {

std::string data(const char* name) { return std::string(TOWERLIMITS_DATA_DIR) + "/" + name; }

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("towerlimits_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

ExperimentConfig tower_cfg(ExperimentKind kind, const char* tower, const char* obs) {
    ExperimentConfig c;
    c.kind = kind;
    c.tower = data(tower);
    c.observable = obs;
    c.samples = 2000;
    c.n_grid = {4, 16, 64};
    c.seed = 11;
    c.config_hash = "test";
    return c;
}

}  // namespace

TEST(Config, SectionsCommentsAndPositions) {
    const auto c = Config::parse("top = 1\n[experiment]  # comment\n  kind = clt\nn_grid = pow2:7:9\n");
    EXPECT_EQ(c.integer("top"), 1);
    EXPECT_EQ(c.text("experiment.kind"), "clt");
    EXPECT_EQ(c.entries().at("experiment.kind").line, 3);
    EXPECT_EQ(c.entries().at("experiment.kind").column, 10);
    EXPECT_EQ(c.numbers("experiment.n_grid"), (std::vector<double>{128, 256, 512}));
}

TEST(Config, ListAndRangeForms) {
    const auto c = Config::parse("a = 1, 2.5,3\nb = 0:1:5\nc = 7\n");
    EXPECT_EQ(c.numbers("a"), (std::vector<double>{1, 2.5, 3}));
    EXPECT_EQ(c.numbers("b"), (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
    EXPECT_EQ(c.numbers("c"), (std::vector<double>{7}));
}

TEST(Config, ErrorsCarryLineAndColumn) {
    try {
        Config::parse("[s]\nx = 1\nx = 2\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
    }
    try {
        Config::parse("[s]\n\n  oops\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.column(), 3);
    }
    const auto c = Config::parse("[s]\nx =   abc\n");
    try {
        c.number("s.x");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.column(), 7);
    }
    EXPECT_THROW(Config::parse("[bad name]\n"), ParseError);
    EXPECT_THROW(Config::parse("x = 1\n").numbers("x2"), ParseError);
}

TEST(Config, HashIgnoresLayout) {
    const auto a = Config::parse("[e]\nx = 1\ny = 2\n");
    const auto b = Config::parse("# header\n[e]\ny=2   # two\n\nx =1\n");
    const auto c = Config::parse("[e]\nx = 1\ny = 3\n");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
    EXPECT_EQ(a.hash_hex().size(), 16u);
}

TEST(ExperimentConfig, UnknownKeysAreErrors) {
    const auto c = Config::parse("[experiment]\nkind = clt\nsampels = 5000\n");
    try {
        experiment_config(c);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
    }
}

TEST(ExperimentConfig, ReadsFieldsAndResolvesPaths) {
    const auto c = Config::parse(
        "[experiment]\nkind = be\nseed = 9\nsamples = 5000\nn_grid = pow2:3:5\n[system]\ntower = pm_one.tw\n"
        "[observable]\nname = spin\n[be]\ndelta = 1\ncalibration_tower = pm_one.tw\n[accept]\nexponent_tolerance = "
        "0.15\n");
    const auto x = experiment_config(c, TOWERLIMITS_DATA_DIR);
    EXPECT_EQ(x.kind, ExperimentKind::berry_esseen);
    EXPECT_EQ(x.seed, 9u);
    EXPECT_EQ(x.samples, 5000);
    EXPECT_EQ(x.n_grid, (std::vector<long>{8, 16, 32}));
    EXPECT_EQ(x.tower, std::filesystem::path(TOWERLIMITS_DATA_DIR) / "pm_one.tw");
    EXPECT_TRUE(x.calibrate);
    EXPECT_DOUBLE_EQ(x.accept.at("exponent_tolerance"), 0.15);
    EXPECT_EQ(x.config_hash, c.hash_hex());
}

TEST(ExperimentConfig, RejectsBadValues) {
    EXPECT_THROW(experiment_config(Config::parse("[experiment]\nkind = nope\n")), ParseError);
    EXPECT_THROW(experiment_config(Config::parse("[experiment]\nkind = clt\nsamples = 10\n")), ParseError);
    EXPECT_THROW(experiment_config(Config::parse("[experiment]\nkind = clt\nn_grid = 8, 4\n")), ParseError);
    EXPECT_THROW(experiment_config(Config::parse("[experiment]\nkind = clt\n[system]\nalpha = 0.7\n")), ParseError);
    EXPECT_THROW(experiment_config(Config::parse("[experiment]\nkind = be\n")), ParseError);
    EXPECT_THROW(experiment_config(Config::parse("[experiment]\nkind = llt\n[llt]\nu = sin\n")), ParseError);
}

TEST(Sampling, IndependentOfThreadCount) {
    const LsvSystem sys(0.3);
    const auto f = lsv_observable("x", 0.3);
    const auto a = sample_birkhoff(sys, f, 50, 9000, 5, 2, {.threads = 1, .keep_endpoints = true});
    const auto b = sample_birkhoff(sys, f, 50, 9000, 5, 2, {.threads = 3, .keep_endpoints = true});
    EXPECT_EQ(a.sums, b.sums);
    EXPECT_EQ(a.ends, b.ends);
    const auto c = sample_birkhoff(sys, f, 50, 9000, 5, 3);
    EXPECT_NE(a.sums, c.sums);

    const auto tower = load_tower(data("three_cell.tw"));
    const auto g = tower.observable("wave");
    EXPECT_EQ(sample_birkhoff(tower, g, 30, 5000, 1, 0, {.threads = 1}).sums,
              sample_birkhoff(tower, g, 30, 5000, 1, 0, {.threads = 4}).sums);
}

TEST(Sampling, IidTowerMoments) {
    const auto tower = load_tower(data("pm_one.tw"));
    const long N = 40000, n = 25;
    const auto b = sample_birkhoff(tower, tower.observable("spin"), n, N, 3, 0);
    double m = 0, v = 0;
    for (double s : b.sums) m += s, v += s * s;
    m /= N;
    v = v / N - m * m;
    EXPECT_NEAR(m, 0.0, 5.0 * std::sqrt(n / double(N)));
    EXPECT_NEAR(v / n, 1.0, 5.0 * std::sqrt(2.0 / N));
    for (double s : b.sums) ASSERT_EQ(std::fmod(std::abs(s), 2.0), 1.0);  // odd n keeps parity
}

TEST(Sampling, RejectsBadArguments) {
    const LsvSystem sys(0.3);
    const auto tower = load_tower(data("pm_one.tw"));
    EXPECT_THROW(sample_birkhoff(sys, lsv_observable("x", 0.3), -1, 10, 1, 0), InvalidInput);
    EXPECT_THROW(sample_birkhoff(sys, tower.observable("spin"), 1, 10, 1, 0), InvalidInput);
    EXPECT_THROW(sample_birkhoff(tower, tower.observable("spin"), 1, 0, 1, 0), InvalidInput);
}

TEST(KsDistance, ExactSmallCases) {
    EXPECT_DOUBLE_EQ(ks_distance_normal({0.0}, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(ks_distance_normal({0.0, 0.0, 0.0}, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(ks_distance_normal({-1.0, 0.0, 2.0, 3.0}, 0.0), 0.5);
    // two tied points at 0 against N(0,1): the jump at 0 goes from 0 to 1
    EXPECT_DOUBLE_EQ(ks_distance_normal({0.0, 0.0}, 1.0), 0.5);
    EXPECT_THROW(ks_distance_normal({}, 1.0), InvalidInput);
    EXPECT_THROW(ks_distance_normal({1.0}, -1.0), InvalidInput);
}

TEST(KsDistance, QuantileSampleIsWithinOneOverN) {
    // Midpoint quantiles of N(0, 4): the empirical CDF misses by exactly 1/(2N).
    const int N = 1000;
    std::vector<double> q;
    for (int i = 0; i < N; ++i) {
        const double p = (i + 0.5) / N;
        double lo = -20, hi = 20;
        for (int k = 0; k < 200; ++k) {
            const double mid = 0.5 * (lo + hi);
            (normal_cdf(mid, 2.0) < p ? lo : hi) = mid;
        }
        q.push_back(0.5 * (lo + hi));
    }
    const double d = ks_distance_normal(q, 2.0);
    EXPECT_NEAR(d, 0.5 / N, 1e-9);
    EXPECT_GT(ks_distance_normal(q, 1.0), 0.1);
}

TEST(TowerVariance, IidSurrogatesHaveUnitVariance) {
    const auto pm = load_tower(data("pm_one.tw"));
    EXPECT_NEAR(tower_variance(pm, pm.observable("spin")), 1.0, 1e-14);
    const auto b4 = load_tower(data("binomial4.tw"));
    EXPECT_NEAR(tower_variance(b4, b4.observable("step")), 1.0, 1e-14);
}

TEST(TowerVariance, MatchesAutocovarianceSeries) {
    const auto t = load_tower(data("three_cell.tw"));
    const auto f = t.observable("wave");
    const Eigen::MatrixXd Q = t.markov_matrix();
    Eigen::VectorXd pi = t.state_mass();
    pi /= pi.sum();
    Eigen::VectorXd v = t.state_values(f);
    v.array() -= pi.dot(v);
    double sum = pi.dot(v.cwiseProduct(v));
    Eigen::VectorXd Qk = v;
    for (int k = 1; k < 400; ++k) {
        Qk = Q * Qk;
        sum += 2.0 * pi.dot(v.cwiseProduct(Qk));
    }
    EXPECT_NEAR(tower_variance(t, f), sum, 1e-12);
    EXPECT_GT(sum, 0.0);
}

TEST(LatticeSpan, CycleStructure) {
    const auto pm = load_tower(data("pm_one.tw"));
    EXPECT_EQ(lattice_span(pm, pm.observable("spin")), 2);
    const auto b4 = load_tower(data("binomial4.tw"));
    EXPECT_EQ(lattice_span(b4, b4.observable("step")), 1);
    const auto two = load_tower(data("two_cell.tw"));
    EXPECT_EQ(lattice_span(two, two.observable("q")), 1);
    // q = 1 on the top level of every column counts returns: cohomologous to the constant 1/E(phi) is
    // false, but q = 3 everywhere is a constant
    EXPECT_EQ(lattice_span(two, TowerObservable::cellwise("c", {{3.0}, {3.0, 3.0}})), 0);
    // values in 3Z on a mixing chain
    EXPECT_EQ(lattice_span(b4, b4.observable("step").scaled(3.0)), 3);
    EXPECT_THROW(lattice_span(pm, pm.observable("spin").scaled(0.5)), InvalidInput);
}

TEST(LatticeLaws, BalancedWalkMatchesBinomialCoefficients) {
    const auto pm = load_tower(data("pm_one.tw"));
    std::vector<long> ns;
    for (long n = 0; n <= 20; ++n) ns.push_back(n);
    const auto laws = lattice_laws(pm, pm.observable("spin"), ns);
    ASSERT_EQ(laws.size(), ns.size());
    for (const auto& law : laws) {
        const int n = static_cast<int>(law.n);
        EXPECT_EQ(law.offset, -n);
        for (int j = 0; j <= 2 * n; ++j) {
            const int k = j - n;
            const double want = (n + k) % 2 ? 0.0 : binomial(n, (n + k) / 2) / std::ldexp(1.0, n);
            ASSERT_EQ(law.p[j], want) << "n=" << n << " k=" << k;
        }
    }
}

TEST(LatticeLaws, MassIsConserved) {
    const auto b4 = load_tower(data("binomial4.tw"));
    const std::vector<long> ns{1, 10, 100, 500};
    for (const auto& law : lattice_laws(b4, b4.observable("step"), ns)) {
        double total = 0.0;
        for (double p : law.p) total += p;
        EXPECT_NEAR(total, 1.0, 1e-14);
        for (double p : law.p) ASSERT_GE(p, 0.0);
    }
    // S_n of Binomial(4,1/2) - 2 steps is Binomial(4n, 1/2) - 2n
    const std::vector<long> n3{3};
    const auto law = lattice_laws(b4, b4.observable("step"), n3)[0];
    for (int j = 0; j <= 12; ++j) EXPECT_DOUBLE_EQ(law.p[j], binomial(12, j) / 4096.0);
}

TEST(LatticeLaws, OverflowAdvisesCap) {
    const auto pm = load_tower(data("pm_one.tw"));
    const std::vector<long> ns{1000};
    try {
        lattice_laws(pm, pm.observable("spin"), ns, 1000);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("n <= 249"), std::string::npos) << e.what();
    }
    const std::vector<long> bad{5, 3};
    EXPECT_THROW(lattice_laws(pm, pm.observable("spin"), bad), InvalidInput);
}

TEST(RunLatticeLlt, BinomialStepsApproachTheDensity) {
    auto cfg = tower_cfg(ExperimentKind::lattice_llt, "binomial4.tw", "step");
    cfg.n_grid = {16, 256, 4096};
    const auto rep = run_lattice_llt(cfg);
    EXPECT_EQ(rep.span, 1);
    EXPECT_NEAR(rep.sigma2, 1.0, 1e-14);
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_GT(rep.rows[0].abs_error, rep.rows[2].abs_error);
    EXPECT_LT(rep.rows[2].abs_error, 1e-3);
    for (const auto& r : rep.rows) EXPECT_LT(r.mass_defect, 1e-13);
}

TEST(RunLatticeLlt, ReturnCounterWithDrift) {
    // q in {0, 1}, rho = -E q; k_n - n rho is the integer nearest n E q
    auto cfg = tower_cfg(ExperimentKind::lattice_llt, "two_cell.tw", "q");
    cfg.n_grid = {64, 1024};
    const auto rep = run_lattice_llt(cfg);
    EXPECT_NEAR(rep.rho, -2.0 / 3.0, 1e-15);
    EXPECT_EQ(rep.rows[1].k, 683);
    EXPECT_LT(rep.rows[1].abs_error, rep.rows[0].abs_error);
}

TEST(RunLatticeLlt, RefusesSpanTwoAndFlagsDegenerate) {
    EXPECT_THROW(run_lattice_llt(tower_cfg(ExperimentKind::lattice_llt, "pm_one.tw", "spin")), PreconditionError);
    const auto dir = scratch_dir("zero_tower");
    {
        std::ofstream out(dir / "zero.tw");
        out << "cells 2\n1 1 0.5 0.5\n1 2 0.5 0.5\nobs zero 0 0\nobs zero 1 0 0\n";
    }
    auto cfg = tower_cfg(ExperimentKind::lattice_llt, "two_cell.tw", "zero");
    cfg.tower = dir / "zero.tw";
    const auto rep = run_lattice_llt(cfg);
    EXPECT_TRUE(rep.degenerate);
    EXPECT_EQ(rep.span, 0);
    for (const auto& r : rep.rows) EXPECT_EQ(r.probability, 1.0);
}

TEST(FitKsExponent, RecoversPowerLawAndGatesNoise) {
    std::vector<BeRow> rows;
    for (long n : {16, 32, 64, 128, 256}) {
        const double ks = 0.8 * std::pow(static_cast<double>(n), -0.5);
        rows.push_back({n, ks, 1.63e-3, ks > 3 * 1.63e-3});
    }
    const auto fit = fit_ks_exponent(rows, 1000000);
    ASSERT_TRUE(fit.conclusive);
    EXPECT_NEAR(fit.exponent, 0.5, 1e-12);
    EXPECT_EQ(fit.window_low, 16);
    EXPECT_EQ(fit.window_high, 256);
    for (auto& r : rows) r.in_window = r.n < 64;
    EXPECT_FALSE(fit_ks_exponent(rows, 1000000).conclusive);
}

TEST(RunClt, ZeroObservableIsDegenerate) {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::clt;
    cfg.alpha = 0.2;
    cfg.observable = "zero";
    cfg.cells = 256;
    cfg.samples = 1000;
    cfg.n_grid = {8, 32};
    const auto rep = run_clt(cfg);
    EXPECT_TRUE(rep.degenerate);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.ks, 0.0);
        EXPECT_EQ(r.variance, 0.0);
    }
}

TEST(RunClt, IidSurrogateSitsNearTheNoiseFloor) {
    auto cfg = tower_cfg(ExperimentKind::clt, "binomial4.tw", "step");
    cfg.samples = 20000;
    cfg.n_grid = {1024};
    const auto rep = run_clt(cfg);
    EXPECT_TRUE(rep.sigma2.exact);
    // lattice effect 1/(2 sqrt(2 pi n)) plus sampling noise
    EXPECT_LT(rep.rows[0].ks, 0.0062 + rep.rows[0].noise_floor);
    EXPECT_NEAR(rep.rows[0].variance, 1.0, 0.05);
}

TEST(RunClt, ReproducibleFromSeed) {
    const auto cfg = tower_cfg(ExperimentKind::clt, "three_cell.tw", "wave");
    const auto a = run_clt(cfg), b = run_clt(cfg);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].ks, b.rows[i].ks);
        EXPECT_EQ(a.rows[i].mean, b.rows[i].mean);
    }
    auto other = cfg;
    other.seed = 12;
    EXPECT_NE(run_clt(other).rows[0].mean, a.rows[0].mean);
}

TEST(RunBerryEsseen, InconclusiveBelowTheNoiseFloor) {
    auto cfg = tower_cfg(ExperimentKind::berry_esseen, "binomial4.tw", "step");
    cfg.samples = 1000;
    cfg.n_grid = {256, 512, 1024};
    cfg.delta = 1.0;
    cfg.calibrate = false;
    cfg.accept["exponent_tolerance"] = 0.15;
    const auto rep = run_berry_esseen(cfg);
    EXPECT_EQ(rep.status, "inconclusive at this N");
    ASSERT_EQ(rep.checks.size(), 1u);
    EXPECT_FALSE(rep.checks[0].passed);
}

TEST(RunLlt, RefusesPeriodicObservable) {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::llt;
    cfg.alpha = 0.25;
    cfg.observable = "const:0.7";
    cfg.center = false;
    cfg.cells = 256;
    cfg.scan_cells = 256;
    cfg.scan_t = {1.0};
    try {
        run_llt(cfg);
        FAIL();
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("periodic"), std::string::npos);
    }
}

TEST(RunCharfn, ZeroFrequencyIsOneAndSymmetric) {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::charfn;
    cfg.alpha = 0.3;
    cfg.observable = "x";
    cfg.cells = 512;
    cfg.samples = 2000;
    cfg.n_grid = {16};
    cfg.t_grid = {0.0, 0.4};
    cfg.u = cfg.v = "one";
    const auto rep = run_charfn_compare(cfg);
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_EQ(rep.rows[0].empirical, cplx(1.0));
    EXPECT_NEAR(std::abs(rep.rows[0].predicted - 1.0), 0.0, 1e-9);
    EXPECT_LT(rep.symmetry_defect, 1e-12);
    for (const auto& r : rep.rows) {
        EXPECT_LE(std::abs(r.empirical), 1.0 + 1e-12);
        EXPECT_LE(std::abs(r.predicted), 1.0 + 1e-9);
    }
}

TEST(Report, EveryFileCarriesTheConfigHash) {
    auto cfg = tower_cfg(ExperimentKind::clt, "pm_one.tw", "spin");
    cfg.config_hash = "00c0ffee00c0ffee";
    const auto rep = run_clt(cfg);
    const auto dir = scratch_dir("report");
    const auto w = write_report(rep, dir, true);
    for (const auto& p : {w.csv, w.json, w.svg}) {
        std::ifstream in(p);
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        EXPECT_NE(text.find(cfg.config_hash), std::string::npos) << p;
    }
    std::ifstream in(w.json);
    const auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j["rows"].size(), cfg.n_grid.size());
    EXPECT_EQ(j["meta"]["seed"], cfg.seed);
}
