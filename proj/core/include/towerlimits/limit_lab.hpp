#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "towerlimits/config.hpp"
#include "towerlimits/finite_tower.hpp"
#include "towerlimits/lsv.hpp"
#include "towerlimits/numerics.hpp"
#include "towerlimits/observable.hpp"

namespace towerlimits {

enum class ExperimentKind { clt, berry_esseen, llt, lattice_llt, charfn };
enum class VarianceSource { curvature, greenkubo, both };

ExperimentKind parse_experiment_kind(std::string_view text);
std::string to_string(ExperimentKind kind);

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One experiment. The system is the LSV map unless `tower` is set.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::clt;
    double alpha = 0.2;
    std::filesystem::path tower;
    std::string observable = "x";  // LSV name (see lsv_observable) or tower "obs" name
    bool center = true;
    std::vector<long> n_grid{128};
    long samples = 1000;
    std::uint64_t seed = 1;
    VarianceSource sigma2_source = VarianceSource::curvature;
    int cells = 4096;               // induced operator for sigma2, L(t) and the scan
    long greenkubo_orbit = 10000000;
    int threads = 1;

    // llt: S_n f in J + k_n + u(x) + v(T^n x), k_n = kappa sqrt(n). charfn: weights u(x) v(T^n x).
    double j_low = -0.5, j_high = 0.5;
    double kappa = 0.0;
    std::string u, v;  // "zero", "one", "x" or "base" (indicator of (1/2, 1]); empty picks the default
    std::vector<double> scan_t{0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    int scan_z = 16;
    int scan_cells = 1024;

    // berry_esseen
    double delta = kNaN;  // predicted decay exponent in n; the KS exponent is delta / 2
    bool calibrate = true;
    std::filesystem::path calibration_tower;  // i.i.d. surrogate, required when calibrate
    std::string calibration_observable;

    // charfn
    std::vector<double> t_grid;

    // Acceptance rules from the [accept] section, by name.
    std::map<std::string, double> accept;

    std::string config_hash;
};

// Reads and validates an experiment; relative paths resolve against base_dir. Unknown keys and
// malformed values are ParseErrors.
ExperimentConfig experiment_config(const Config& cfg, const std::filesystem::path& base_dir = {});

struct Check {
    std::string rule;
    bool passed = false;
    std::string detail;
};

struct ReportMeta {
    std::string kind;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string version;
    std::string system;      // "lsv alpha=0.2" or the tower path
    std::string observable;
    long samples = 0;
};

struct VarianceEstimate {
    double sigma2 = 0.0;          // value used in targets
    std::string source;
    double spectral = kNaN;       // derivative formula on the induced operator (or exact for towers)
    double curvature_fit = kNaN;  // Richardson fit of the eigenvalue curve
    bool curvature_converged = false;
    double greenkubo = kNaN;
    double greenkubo_se = kNaN;
    bool disagreement = false;    // sources differ beyond the combined error bars
    double density_bias = kNaN;   // |m(B) from the grid density - m(B) from Kac|
    bool exact = false;
};

struct CltRow {
    long n = 0;
    double mean = 0.0, mean_se = 0.0;
    double variance = 0.0;  // of S_n / sqrt(n)
    double ks = 0.0;
    double noise_floor = 0.0;
};
struct CltReport {
    ReportMeta meta;
    VarianceEstimate sigma2;
    std::vector<CltRow> rows;
    bool degenerate = false;   // sigma2 = 0: distances are to the point mass at 0
    bool decreasing = false;   // KS at the largest n below KS at the smallest n
    std::vector<Check> checks;
};

struct BeRow {
    long n = 0;
    double ks = 0.0;
    double noise_floor = 0.0;
    bool in_window = false;
};
struct ExponentFit {
    bool conclusive = false;  // at least three points above 3x the noise floor
    double exponent = kNaN;   // KS ~ n^-exponent
    double ci_low = kNaN, ci_high = kNaN;
    long window_low = 0, window_high = 0;
    LinearFit line;
};
struct BeReport {
    ReportMeta meta;
    VarianceEstimate sigma2;
    std::vector<BeRow> rows;
    ExponentFit fit;
    double predicted = kNaN;  // delta / 2
    std::optional<std::vector<BeRow>> calibration_rows;
    ExponentFit calibration;
    bool calibration_ok = false;  // CI of the surrogate contains 1/2
    std::string status;           // "ok", "inconclusive at this N" or "calibration failed"
    std::vector<Check> checks;
};

struct LltRow {
    long n = 0;
    double k = 0.0;
    double hits = 0.0;
    double scaled = 0.0;  // sqrt(n) * fraction
    double target = 0.0;
    double ratio = 0.0, ratio_se = 0.0;
};
struct LltReport {
    ReportMeta meta;
    VarianceEstimate sigma2;
    std::vector<LltRow> rows;
    std::string scan_group;
    double scan_max_radius = kNaN;
    std::vector<Check> checks;
};

struct LatticeRow {
    long n = 0;
    long k = 0;             // k_n - n rho
    double probability = 0.0;
    double scaled = 0.0;    // sqrt(n) P(S_n f = k_n)
    double target = 0.0;
    double abs_error = 0.0;
    double mass_defect = 0.0;  // |sum of the distribution - 1|
};
struct LatticeReport {
    ReportMeta meta;
    double sigma2 = 0.0;
    double rho = 0.0;
    int span = 0;
    bool degenerate = false;
    std::vector<LatticeRow> rows;
    std::vector<Check> checks;
};

struct CharfnRow {
    long n = 0;
    double t = 0.0;
    cplx empirical = 0.0;
    double mc_error = 0.0;
    cplx predicted = 0.0;
    double deviation = 0.0;
    bool usable = false;  // MC error at most half the deviation
    double envelope = 0.0;  // shape at the fitted d, before the constant
};
struct CharfnReport {
    ReportMeta meta;
    VarianceEstimate sigma2;
    double tail_exponent = 0.0;  // beta with m(phi > n) ~ n^-beta
    double envelope_constant = kNaN, envelope_d = kNaN;
    double u_integral = 1.0, v_integral = 1.0;
    std::vector<CharfnRow> rows;
    double symmetry_defect = 0.0;  // max |phi(-t) - conj phi(t)| over the grid
    std::vector<Check> checks;
};

CltReport run_clt(const ExperimentConfig& cfg);
BeReport run_berry_esseen(const ExperimentConfig& cfg);
LltReport run_llt(const ExperimentConfig& cfg);
LatticeReport run_lattice_llt(const ExperimentConfig& cfg);
CharfnReport run_charfn_compare(const ExperimentConfig& cfg);

// sigma2 = sum_k Cov(f, f o T^k) for the tower's Markov chain, f centered first.
double tower_variance(const FiniteTower& tower, const TowerObservable& f);

// Exact law of S_n q for an integer-valued cellwise q, started from the invariant masses.
struct LatticeLaw {
    long n = 0;
    long offset = 0;              // value of p[0]
    std::vector<double> p;
};
std::vector<LatticeLaw> lattice_laws(const FiniteTower& tower, const TowerObservable& q, std::span<const long> n_list,
                                     long max_entries = 200000000);

// Largest d such that q = c + g - g o T + d Z on every allowed transition for some integer c;
// 0 when q is cohomologous to a constant.
int lattice_span(const FiniteTower& tower, const TowerObservable& q);

// KS exponent fit over the points above 3x the noise floor.
ExponentFit fit_ks_exponent(std::span<const BeRow> rows, long samples);

std::string library_version();

}  // namespace towerlimits
