#include "towerlimits/limit_lab.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

#include "towerlimits/errors.hpp"
#include "towerlimits/greenkubo.hpp"
#include "towerlimits/induced_operator.hpp"
#include "towerlimits/periodicity.hpp"
#include "towerlimits/sampling.hpp"
#include "towerlimits/spectral.hpp"

namespace towerlimits {

namespace {

constexpr double kNoiseQ = 1.63;  // sqrt(N) * KS quantile used as the noise floor

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

ReportMeta make_meta(const ExperimentConfig& cfg) {
    ReportMeta m;
    m.kind = to_string(cfg.kind);
    m.config_hash = cfg.config_hash;
    m.seed = cfg.seed;
    m.version = library_version();
    m.system = cfg.tower.empty() ? "lsv alpha=" + fmt(cfg.alpha) : cfg.tower.string();
    m.observable = cfg.observable;
    m.samples = cfg.samples;
    return m;
}

std::function<double(double)> weight_function(const std::string& name) {
    if (name == "zero") return [](double) { return 0.0; };
    if (name == "one") return [](double) { return 1.0; };
    if (name == "x") return [](double x) { return x; };
    if (name == "base") return [](double x) { return x > 0.5 ? 1.0 : 0.0; };
    throw InvalidInput("unknown u/v function '" + name + "' (zero, one, x, base)");
}

InducedOptions induced_options(double alpha, int cells, int threads) {
    InducedOptions o;
    o.cells = cells;
    o.n_max = std::max(50, branches_for_tail(alpha, 1e-6));
    o.threads = threads;
    return o;
}

// LSV system, centered observable and the induced table used for sigma2 and L(t).
struct LsvContext {
    std::unique_ptr<LsvSystem> sys;
    TowerObservable f;
    std::unique_ptr<InducedTable> table;
    VarianceEstimate var;
};

LsvContext lsv_context(const ExperimentConfig& cfg, bool need_table) {
    if (!cfg.tower.empty()) throw InvalidInput(to_string(cfg.kind) + ": needs the LSV system, not a tower");
    LsvContext c;
    c.sys = std::make_unique<LsvSystem>(cfg.alpha);
    c.f = lsv_observable(cfg.observable, cfg.alpha);
    if (cfg.center) c.f = centered(c.f, *c.sys);
    auto& ve = c.var;
    const bool spectral = cfg.sigma2_source != VarianceSource::greenkubo;
    if (spectral || need_table) {
        c.table = std::make_unique<InducedTable>(*c.sys, c.f, induced_options(cfg.alpha, cfg.cells, cfg.threads));
        ve.density_bias = std::abs(c.table->density_base_mass() - c.table->base_mass());
    }
    if (spectral) {
        const auto sd = spectral_data(*c.table, geometric_grid(0.02, 0.5, 5));
        ve.spectral = sd.sigma2;
        ve.curvature_fit = sd.curvature.sigma2;
        ve.curvature_converged = sd.curvature.converged;
    }
    if (cfg.sigma2_source != VarianceSource::curvature) {
        const auto gk = greenkubo_variance(*c.sys, c.f, cfg.greenkubo_orbit, cfg.seed);
        ve.greenkubo = gk.sigma2;
        ve.greenkubo_se = gk.standard_error;
    }
    switch (cfg.sigma2_source) {
        case VarianceSource::curvature:
            ve.sigma2 = ve.spectral;
            ve.source = "curvature";
            break;
        case VarianceSource::greenkubo:
            ve.sigma2 = ve.greenkubo;
            ve.source = "greenkubo";
            break;
        case VarianceSource::both: {
            ve.sigma2 = ve.spectral;
            ve.source = "curvature (greenkubo cross-check)";
            const double fit_err = ve.curvature_converged ? std::abs(ve.spectral - ve.curvature_fit) : 0.0;
            ve.disagreement = std::abs(ve.spectral - ve.greenkubo) >
                              2.0 * std::hypot(ve.greenkubo_se, fit_err);
            break;
        }
    }
    ve.sigma2 = std::max(0.0, ve.sigma2);
    return c;
}

struct TowerContext {
    std::unique_ptr<FiniteTower> tower;
    TowerObservable f;
    VarianceEstimate var;
};

TowerObservable tower_observable(const FiniteTower& t, const std::string& name) {
    if (name.empty()) {
        if (t.observables().empty()) throw InvalidInput("tower has no observables");
        return t.observables().begin()->second;
    }
    return t.observable(name);
}

TowerContext tower_context(const std::filesystem::path& path, const std::string& obs, bool center) {
    TowerContext c;
    c.tower = std::make_unique<FiniteTower>(load_tower(path));
    c.f = tower_observable(*c.tower, obs);
    if (center) c.f = c.tower->centered(c.f);
    c.var.sigma2 = std::max(0.0, tower_variance(*c.tower, c.f));
    c.var.spectral = c.var.sigma2;
    c.var.source = "exact (tower)";
    c.var.exact = true;
    return c;
}

std::vector<BeRow> ks_rows(const std::function<BirkhoffBatch(long, std::uint64_t)>& sample,
                           const std::vector<long>& n_grid, double sigma2, long N, std::uint64_t stream0) {
    std::vector<BeRow> rows;
    const double sigma = std::sqrt(sigma2);
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        const long n = n_grid[i];
        auto b = sample(n, stream0 + i);
        const double s = 1.0 / std::sqrt(static_cast<double>(n));
        for (double& x : b.sums) x *= s;
        BeRow r;
        r.n = n;
        r.ks = ks_distance_normal(std::move(b.sums), sigma);
        r.noise_floor = kNoiseQ / std::sqrt(static_cast<double>(N));
        rows.push_back(r);
    }
    return rows;
}

std::optional<double> accept_value(const ExperimentConfig& cfg, const std::string& key) {
    const auto it = cfg.accept.find(key);
    if (it == cfg.accept.end()) return std::nullopt;
    return it->second;
}

}  // namespace

ExperimentKind parse_experiment_kind(std::string_view text) {
    if (text == "clt") return ExperimentKind::clt;
    if (text == "berry_esseen" || text == "be") return ExperimentKind::berry_esseen;
    if (text == "llt") return ExperimentKind::llt;
    if (text == "lattice_llt" || text == "lattice") return ExperimentKind::lattice_llt;
    if (text == "charfn") return ExperimentKind::charfn;
    throw InvalidInput("unknown experiment kind '" + std::string(text) + "'");
}

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::clt: return "clt";
        case ExperimentKind::berry_esseen: return "berry_esseen";
        case ExperimentKind::llt: return "llt";
        case ExperimentKind::lattice_llt: return "lattice_llt";
        case ExperimentKind::charfn: return "charfn";
    }
    return "?";
}

std::string library_version() {
#ifdef TOWERLIMITS_VERSION
    return TOWERLIMITS_VERSION;
#else
    return "unknown";
#endif
}

ExperimentConfig experiment_config(const Config& cfg, const std::filesystem::path& base_dir) {
    cfg.require_known({"experiment.kind", "experiment.seed", "experiment.samples", "experiment.n_grid",
                       "experiment.threads", "system.alpha", "system.tower", "observable.name", "observable.center",
                       "variance.source", "variance.cells", "variance.greenkubo_orbit", "llt.j_low", "llt.j_high",
                       "llt.kappa", "llt.u", "llt.v", "llt.scan_t", "llt.scan_z", "llt.scan_cells", "be.delta",
                       "be.calibrate", "be.calibration_tower", "be.calibration_observable", "charfn.t_grid",
                       "charfn.u", "charfn.v", "accept.ks_decreasing", "accept.exponent_tolerance", "accept.ratio_low",
                       "accept.ratio_high", "accept.at_n", "accept.abs_tolerance", "accept.symmetry_tolerance"});
    auto fail = [&](const std::string& key, const std::string& msg) {
        const auto& e = cfg.entries().at(key);
        throw ParseError("'" + key + "': " + msg, e.line, e.column);
    };
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };

    ExperimentConfig x;
    try {
        x.kind = parse_experiment_kind(cfg.text("experiment.kind"));
    } catch (const InvalidInput& e) {
        if (!cfg.has("experiment.kind")) throw;
        fail("experiment.kind", e.what());
    }
    x.seed = static_cast<std::uint64_t>(cfg.integer("experiment.seed", 1));
    x.samples = cfg.integer("experiment.samples", x.samples);
    if (x.samples < 1000) fail("experiment.samples", "N must be >= 1000");
    if (cfg.has("experiment.n_grid")) {
        x.n_grid.clear();
        for (double v : cfg.numbers("experiment.n_grid")) {
            if (v < 1 || v != std::floor(v)) fail("experiment.n_grid", "lengths must be positive integers");
            x.n_grid.push_back(static_cast<long>(v));
        }
    }
    for (std::size_t i = 1; i < x.n_grid.size(); ++i)
        if (x.n_grid[i] <= x.n_grid[i - 1]) fail("experiment.n_grid", "must be strictly increasing");
    x.threads = static_cast<int>(cfg.integer("experiment.threads", default_threads()));
    if (x.threads < 1) fail("experiment.threads", "must be >= 1");

    if (cfg.has("system.tower") && cfg.has("system.alpha")) fail("system.tower", "give either alpha or tower");
    if (cfg.has("system.tower")) x.tower = resolve(cfg.text("system.tower"));
    x.alpha = cfg.number("system.alpha", x.alpha);
    if (!(x.alpha > 0 && x.alpha < 0.5) && cfg.has("system.alpha")) fail("system.alpha", "must lie in (0, 1/2)");
    x.observable = cfg.text("observable.name", x.tower.empty() ? "x" : "");
    x.center = cfg.flag("observable.center", true);

    const std::string src = cfg.text("variance.source", "curvature");
    if (src == "curvature") x.sigma2_source = VarianceSource::curvature;
    else if (src == "greenkubo") x.sigma2_source = VarianceSource::greenkubo;
    else if (src == "both") x.sigma2_source = VarianceSource::both;
    else fail("variance.source", "expected curvature, greenkubo or both");
    x.cells = static_cast<int>(cfg.integer("variance.cells", x.cells));
    x.greenkubo_orbit = cfg.integer("variance.greenkubo_orbit", x.greenkubo_orbit);

    x.j_low = cfg.number("llt.j_low", x.j_low);
    x.j_high = cfg.number("llt.j_high", x.j_high);
    if (!(x.j_high > x.j_low)) throw ParseError("llt: J must be a non-empty interval");
    x.kappa = cfg.number("llt.kappa", x.kappa);
    if (x.kind == ExperimentKind::charfn) {
        x.u = cfg.text("charfn.u", "one");
        x.v = cfg.text("charfn.v", "one");
    } else {
        x.u = cfg.text("llt.u", "zero");
        x.v = cfg.text("llt.v", "zero");
    }
    for (const auto* key : {"llt.u", "llt.v", "charfn.u", "charfn.v"})
        if (cfg.has(key)) try {
                weight_function(cfg.text(key));
            } catch (const InvalidInput& e) {
                fail(key, e.what());
            }
    if (cfg.has("llt.scan_t")) x.scan_t = cfg.numbers("llt.scan_t");
    x.scan_z = static_cast<int>(cfg.integer("llt.scan_z", x.scan_z));
    x.scan_cells = static_cast<int>(cfg.integer("llt.scan_cells", x.scan_cells));

    x.delta = cfg.number("be.delta", kNaN);
    x.calibrate = cfg.flag("be.calibrate", x.kind == ExperimentKind::berry_esseen);
    if (cfg.has("be.calibration_tower")) x.calibration_tower = resolve(cfg.text("be.calibration_tower"));
    x.calibration_observable = cfg.text("be.calibration_observable", "");
    if (x.kind == ExperimentKind::berry_esseen) {
        if (std::isnan(x.delta)) throw ParseError("berry_esseen needs be.delta");
        if (x.calibrate && x.calibration_tower.empty()) throw ParseError("calibration needs be.calibration_tower");
    }
    if (cfg.has("charfn.t_grid")) x.t_grid = cfg.numbers("charfn.t_grid");
    if (x.kind == ExperimentKind::charfn && x.t_grid.empty()) throw ParseError("charfn needs charfn.t_grid");

    for (const auto& [key, e] : cfg.entries())
        if (key == "accept.ks_decreasing")
            x.accept["ks_decreasing"] = cfg.flag(key, false) ? 1.0 : 0.0;
        else if (key.rfind("accept.", 0) == 0)
            x.accept[key.substr(7)] = cfg.number(key);
    x.config_hash = cfg.hash_hex();
    return x;
}

double tower_variance(const FiniteTower& tower, const TowerObservable& f) {
    const Eigen::MatrixXd Q = tower.markov_matrix();
    Eigen::VectorXd pi = tower.state_mass();
    pi /= pi.sum();
    Eigen::VectorXd v = tower.state_values(f);
    v.array() -= pi.dot(v);
    const Eigen::Index S = Q.rows();
    // g solves (I - Q) g = v with pi(g) = 0.
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(S, S) - Q + Eigen::VectorXd::Ones(S) * pi.transpose();
    const Eigen::VectorXd g = M.partialPivLu().solve(v);
    return 2.0 * pi.dot(v.cwiseProduct(g)) - pi.dot(v.cwiseProduct(v));
}

ExponentFit fit_ks_exponent(std::span<const BeRow> rows, long samples) {
    ExponentFit fit;
    std::vector<double> x, y, w;
    const double se = 0.5 / std::sqrt(static_cast<double>(samples));
    for (const auto& r : rows) {
        if (!r.in_window) continue;
        x.push_back(static_cast<double>(r.n));
        y.push_back(r.ks);
        w.push_back((r.ks / se) * (r.ks / se));  // inverse variance of log KS
    }
    if (x.size() < 3) return fit;
    fit.conclusive = true;
    fit.line = fit_loglog(x, y, w);
    fit.exponent = -fit.line.slope;
    fit.ci_low = -fit.line.ci_high;
    fit.ci_high = -fit.line.ci_low;
    fit.window_low = static_cast<long>(*std::min_element(x.begin(), x.end()));
    fit.window_high = static_cast<long>(*std::max_element(x.begin(), x.end()));
    return fit;
}

CltReport run_clt(const ExperimentConfig& cfg) {
    CltReport rep;
    rep.meta = make_meta(cfg);
    std::function<BirkhoffBatch(long, std::uint64_t)> sample;
    LsvContext lc;
    TowerContext tc;
    const SampleOptions so{.threads = cfg.threads};
    if (cfg.tower.empty()) {
        lc = lsv_context(cfg, false);
        rep.sigma2 = lc.var;
        sample = [&](long n, std::uint64_t s) { return sample_birkhoff(*lc.sys, lc.f, n, cfg.samples, cfg.seed, s, so); };
    } else {
        tc = tower_context(cfg.tower, cfg.observable, cfg.center);
        rep.sigma2 = tc.var;
        sample = [&](long n, std::uint64_t s) {
            return sample_birkhoff(*tc.tower, tc.f, n, cfg.samples, cfg.seed, s, so);
        };
    }
    rep.degenerate = rep.sigma2.sigma2 <= 1e-14;
    const double sigma = rep.degenerate ? 0.0 : std::sqrt(rep.sigma2.sigma2);
    const double N = static_cast<double>(cfg.samples);
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
        const long n = cfg.n_grid[i];
        auto b = sample(n, i);
        const double s = 1.0 / std::sqrt(static_cast<double>(n));
        for (double& x : b.sums) x *= s;
        CltRow r;
        r.n = n;
        r.mean = pairwise_sum(b.sums) / N;
        CompensatedSum<double> ss;
        for (double x : b.sums) ss.add((x - r.mean) * (x - r.mean));
        r.variance = ss.value() / (N - 1.0);
        r.mean_se = std::sqrt(r.variance / N);
        r.ks = ks_distance_normal(std::move(b.sums), sigma);
        r.noise_floor = kNoiseQ / std::sqrt(N);
        rep.rows.push_back(r);
    }
    rep.decreasing = rep.rows.size() > 1 && rep.rows.back().ks < rep.rows.front().ks;
    if (accept_value(cfg, "ks_decreasing").value_or(0) != 0)
        rep.checks.push_back({"ks decreases from the smallest to the largest n", rep.decreasing,
                              "KS " + fmt(rep.rows.front().ks) + " -> " + fmt(rep.rows.back().ks)});
    return rep;
}

BeReport run_berry_esseen(const ExperimentConfig& cfg) {
    BeReport rep;
    rep.meta = make_meta(cfg);
    rep.predicted = cfg.delta / 2.0;
    const SampleOptions so{.threads = cfg.threads};

    if (cfg.calibrate) {
        const auto cal = tower_context(cfg.calibration_tower, cfg.calibration_observable, true);
        auto rows = ks_rows(
            [&](long n, std::uint64_t s) { return sample_birkhoff(*cal.tower, cal.f, n, cfg.samples, cfg.seed, s, so); },
            cfg.n_grid, cal.var.sigma2, cfg.samples, 1u << 20);
        for (auto& r : rows) r.in_window = r.ks > 3.0 * r.noise_floor;
        rep.calibration = fit_ks_exponent(rows, cfg.samples);
        rep.calibration_ok =
            rep.calibration.conclusive && rep.calibration.ci_low <= 0.5 && 0.5 <= rep.calibration.ci_high;
        rep.calibration_rows = std::move(rows);
    }

    std::function<BirkhoffBatch(long, std::uint64_t)> sample;
    LsvContext lc;
    TowerContext tc;
    if (cfg.tower.empty()) {
        lc = lsv_context(cfg, false);
        rep.sigma2 = lc.var;
        sample = [&](long n, std::uint64_t s) { return sample_birkhoff(*lc.sys, lc.f, n, cfg.samples, cfg.seed, s, so); };
    } else {
        tc = tower_context(cfg.tower, cfg.observable, cfg.center);
        rep.sigma2 = tc.var;
        sample = [&](long n, std::uint64_t s) {
            return sample_birkhoff(*tc.tower, tc.f, n, cfg.samples, cfg.seed, s, so);
        };
    }
    if (!(rep.sigma2.sigma2 > 0)) throw PreconditionError("berry_esseen: sigma2 = 0, nothing to compare against");
    rep.rows = ks_rows(sample, cfg.n_grid, rep.sigma2.sigma2, cfg.samples, 0);
    for (auto& r : rep.rows) r.in_window = r.ks > 3.0 * r.noise_floor;
    rep.fit = fit_ks_exponent(rep.rows, cfg.samples);

    if (cfg.calibrate && !rep.calibration_ok) rep.status = "calibration failed";
    else if (!rep.fit.conclusive) rep.status = "inconclusive at this N";
    else rep.status = "ok";

    if (cfg.calibrate)
        rep.checks.push_back({"i.i.d. calibration CI contains 1/2", rep.calibration_ok,
                              rep.calibration.conclusive
                                  ? "exponent " + fmt(rep.calibration.exponent) + " CI [" + fmt(rep.calibration.ci_low) +
                                        ", " + fmt(rep.calibration.ci_high) + "]"
                                  : "calibration inconclusive"});
    if (const auto tol = accept_value(cfg, "exponent_tolerance")) {
        const bool ok = rep.status == "ok" && std::abs(rep.fit.exponent - rep.predicted) <= *tol;
        rep.checks.push_back({"KS exponent within " + fmt(*tol) + " of " + fmt(rep.predicted), ok,
                              rep.fit.conclusive ? "fitted " + fmt(rep.fit.exponent) + " on n in [" +
                                                       std::to_string(rep.fit.window_low) + ", " +
                                                       std::to_string(rep.fit.window_high) + "]"
                                                 : rep.status});
    }
    return rep;
}

LltReport run_llt(const ExperimentConfig& cfg) {
    LltReport rep;
    rep.meta = make_meta(cfg);
    auto lc = lsv_context(cfg, false);
    rep.sigma2 = lc.var;
    {
        InducedTable scan_table(*lc.sys, lc.f, induced_options(cfg.alpha, cfg.scan_cells, cfg.threads));
        const auto scan = periodicity_scan(scan_table, cfg.scan_t, unit_circle_grid(cfg.scan_z));
        rep.scan_group = scan.group;
        rep.scan_max_radius = scan.max_radius_off_zero;
        for (const auto& row : scan.rows)
            if (row.detected && row.t != 0.0) {
                std::ostringstream msg;
                msg << "llt: observable looks periodic: eigenvalue " << row.lambda << " of R(z, t) at t = " << row.t
                    << ", z = " << row.z << " (near-period " << 2.0 * std::numbers::pi / row.t << ")";
                throw PreconditionError(msg.str());
            }
    }
    if (!(rep.sigma2.sigma2 > 0)) throw PreconditionError("llt: sigma2 = 0 (degenerate observable)");

    const auto u = weight_function(cfg.u), v = weight_function(cfg.v);
    const bool shifts = cfg.u != "zero" || cfg.v != "zero";
    const SampleOptions so{.threads = cfg.threads, .keep_endpoints = shifts};
    const double sigma = std::sqrt(rep.sigma2.sigma2);
    const double N = static_cast<double>(cfg.samples);
    const double width = cfg.j_high - cfg.j_low;
    const double target =
        width * std::exp(-cfg.kappa * cfg.kappa / (2.0 * rep.sigma2.sigma2)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
        const long n = cfg.n_grid[i];
        const auto b = sample_birkhoff(*lc.sys, lc.f, n, cfg.samples, cfg.seed, i, so);
        LltRow r;
        r.n = n;
        r.k = cfg.kappa * std::sqrt(static_cast<double>(n));
        long hits = 0;
        for (std::size_t s = 0; s < b.sums.size(); ++s) {
            const double shift = r.k + (shifts ? u(b.starts[s]) + v(b.ends[s]) : 0.0);
            const double val = b.sums[s];
            hits += val >= cfg.j_low + shift && val <= cfg.j_high + shift;
        }
        r.hits = static_cast<double>(hits);
        const double p = r.hits / N;
        const double rt = std::sqrt(static_cast<double>(n));
        r.scaled = rt * p;
        r.target = target;
        r.ratio = r.scaled / target;
        r.ratio_se = rt * std::sqrt(std::max(p * (1 - p), 1.0 / N) / N) / target;
        rep.rows.push_back(r);
    }
    if (const auto lo = accept_value(cfg, "ratio_low")) {
        const double hi = accept_value(cfg, "ratio_high").value_or(INFINITY);
        const long at = static_cast<long>(accept_value(cfg, "at_n").value_or(static_cast<double>(cfg.n_grid.back())));
        const auto it = std::find_if(rep.rows.begin(), rep.rows.end(), [&](const LltRow& r) { return r.n == at; });
        const bool ok = it != rep.rows.end() && it->ratio >= *lo && it->ratio <= hi;
        rep.checks.push_back({"sqrt(n) count / target in [" + fmt(*lo) + ", " + fmt(hi) + "] at n = " + std::to_string(at),
                              ok, it == rep.rows.end() ? "n not in grid" : "ratio " + fmt(it->ratio) + " +- " + fmt(it->ratio_se)});
    }
    return rep;
}

int lattice_span(const FiniteTower& tower, const TowerObservable& q) {
    const Eigen::VectorXd val = tower.state_values(q);
    const Eigen::MatrixXd Q = tower.markov_matrix();
    const int S = tower.state_count();
    std::vector<long> qi(S);
    for (int s = 0; s < S; ++s) {
        if (std::abs(val(s) - std::round(val(s))) > 1e-12) throw InvalidInput("lattice_span: q must be integer-valued");
        qi[s] = std::lround(val(s));
    }
    // Potentials a + b c along a BFS tree, c being the unknown constant per step.
    std::vector<long> a(S, 0), b(S, 0);
    std::vector<bool> seen(S, false);
    std::vector<int> queue{0};
    seen[0] = true;
    for (std::size_t h = 0; h < queue.size(); ++h) {
        const int s = queue[h];
        for (int r = 0; r < S; ++r)
            if (Q(s, r) > 0 && !seen[r]) {
                seen[r] = true;
                a[r] = a[s] + qi[s];
                b[r] = b[s] - 1;
                queue.push_back(r);
            }
    }
    std::vector<std::pair<long, long>> vec;  // (A_e, B_e): A_e + c B_e must vanish mod d
    for (int s = 0; s < S; ++s)
        for (int r = 0; r < S; ++r)
            if (Q(s, r) > 0) {
                const long A = a[s] + qi[s] - a[r], B = b[s] - 1 - b[r];
                if (A != 0 || B != 0) vec.emplace_back(A, B);
            }
    if (vec.empty()) return 0;
    long G = 0;
    for (std::size_t i = 0; i < vec.size(); ++i)
        for (std::size_t j = i + 1; j < vec.size(); ++j)
            G = std::gcd(G, vec[i].first * vec[j].second - vec[j].first * vec[i].second);
    if (G == 0) {
        // Collinear: all cycles give multiples of one primitive (A0, B0).
        long A0 = vec[0].first, B0 = vec[0].second;
        const long g0 = std::gcd(A0, B0);
        A0 /= g0;
        B0 /= g0;
        if (std::abs(B0) == 1) return 0;  // q - c is a coboundary
        long g = 0;
        for (const auto& [A, B] : vec) g = std::gcd(g, A != 0 ? A / A0 : B / B0);
        return static_cast<int>(std::abs(g));
    }
    for (long d = std::abs(G); d >= 1; --d) {
        if (G % d) continue;
        for (long c = 0; c < d; ++c) {
            bool ok = true;
            for (const auto& [A, B] : vec)
                if (((A + c * B) % d + d) % d != 0) {
                    ok = false;
                    break;
                }
            if (ok) return static_cast<int>(d);
        }
    }
    return 1;
}

std::vector<LatticeLaw> lattice_laws(const FiniteTower& tower, const TowerObservable& q, std::span<const long> n_list,
                                     long max_entries) {
    if (n_list.empty()) return {};
    for (std::size_t i = 0; i < n_list.size(); ++i)
        if (n_list[i] < 0 || (i && n_list[i] <= n_list[i - 1]))
            throw InvalidInput("lattice_laws: n values must be non-negative and increasing");
    const Eigen::VectorXd val = tower.state_values(q);
    const Eigen::MatrixXd Q = tower.markov_matrix();
    Eigen::VectorXd pi = tower.state_mass();
    pi /= pi.sum();
    const int S = tower.state_count();
    std::vector<long> qi(S);
    for (int s = 0; s < S; ++s) {
        if (std::abs(val(s) - std::round(val(s))) > 1e-12) throw InvalidInput("lattice_laws: q must be integer-valued");
        qi[s] = std::lround(val(s));
    }
    const long qmin = *std::min_element(qi.begin(), qi.end()), qmax = *std::max_element(qi.begin(), qi.end());
    const long n_max = n_list.back();
    const long W = n_max * (qmax - qmin) + 1;
    if (static_cast<double>(W) * S > static_cast<double>(max_entries)) {
        const long cap = (max_entries / S - 1) / std::max(1L, qmax - qmin);
        throw NumericalError("lattice_laws: value range of " + std::to_string(W) + " x " + std::to_string(S) +
                             " states exceeds the table limit; use n <= " + std::to_string(cap));
    }
    std::vector<std::vector<std::pair<int, double>>> next_of(S);
    for (int s = 0; s < S; ++s)
        for (int r = 0; r < S; ++r)
            if (Q(s, r) > 0) next_of[s].emplace_back(r, Q(s, r));

    const long base = -n_max * qmin;  // index of value 0
    std::vector<double> cur(static_cast<std::size_t>(S) * W, 0.0), nxt(cur.size(), 0.0);
    for (int s = 0; s < S; ++s) cur[static_cast<std::size_t>(s) * W + base] = pi(s);
    std::vector<LatticeLaw> out;
    std::size_t want = 0;
    for (long k = 0;; ++k) {
        const long lo = base + k * qmin, hi = base + k * qmax;  // support of S_k q
        while (want < n_list.size() && n_list[want] == k) {
            LatticeLaw law;
            law.n = k;
            law.offset = k * qmin;
            law.p.assign(hi - lo + 1, 0.0);
            for (int s = 0; s < S; ++s)
                for (long i = lo; i <= hi; ++i) law.p[i - lo] += cur[static_cast<std::size_t>(s) * W + i];
            out.push_back(std::move(law));
            ++want;
        }
        if (want == n_list.size()) break;
        const long nlo = base + (k + 1) * qmin, nhi = base + (k + 1) * qmax;
        for (int s = 0; s < S; ++s)
            std::fill(nxt.begin() + static_cast<long>(s) * W + nlo, nxt.begin() + static_cast<long>(s) * W + nhi + 1, 0.0);
        for (int s = 0; s < S; ++s) {
            const double* src = cur.data() + static_cast<std::size_t>(s) * W;
            for (const auto& [r, pr] : next_of[s]) {
                double* dst = nxt.data() + static_cast<std::size_t>(r) * W + qi[s];
                for (long i = lo; i <= hi; ++i) dst[i] += pr * src[i];
            }
        }
        cur.swap(nxt);
    }
    return out;
}

LatticeReport run_lattice_llt(const ExperimentConfig& cfg) {
    if (cfg.tower.empty()) throw InvalidInput("lattice_llt: needs a finite tower (system.tower)");
    LatticeReport rep;
    rep.meta = make_meta(cfg);
    const FiniteTower tower = load_tower(cfg.tower);
    const TowerObservable q = tower_observable(tower, cfg.observable);
    rep.span = lattice_span(tower, q);
    if (rep.span > 1)
        throw PreconditionError("lattice_llt: gcd condition fails, S_n q lives on cosets of " + std::to_string(rep.span) +
                                "Z (the limit would be " + std::to_string(rep.span) + " times the Gaussian density)");
    rep.rho = -tower.integrate(q);
    rep.sigma2 = std::max(0.0, tower_variance(tower, q));
    rep.degenerate = rep.sigma2 <= 1e-14;
    const double sigma = std::sqrt(rep.sigma2);
    const auto laws = lattice_laws(tower, q, cfg.n_grid);
    for (const auto& law : laws) {
        LatticeRow r;
        r.n = law.n;
        const double rt = std::sqrt(static_cast<double>(law.n));
        // k_n on the lattice n rho + Z nearest to kappa sqrt(n); r.k is its S_n q part.
        r.k = std::lround(cfg.kappa * rt - law.n * rep.rho);
        const long idx = r.k - law.offset;
        r.probability = idx >= 0 && idx < static_cast<long>(law.p.size()) ? law.p[idx] : 0.0;
        r.scaled = rt * r.probability;
        const double kappa_n = (law.n * rep.rho + r.k) / rt;
        r.target = rep.degenerate ? kNaN
                                  : std::exp(-kappa_n * kappa_n / (2.0 * rep.sigma2)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
        r.abs_error = std::abs(r.scaled - r.target);
        CompensatedSum<double> total;
        for (double p : law.p) total.add(p);
        r.mass_defect = std::abs(total.value() - 1.0);
        rep.rows.push_back(r);
    }
    if (const auto tol = accept_value(cfg, "abs_tolerance")) {
        const long at = static_cast<long>(accept_value(cfg, "at_n").value_or(static_cast<double>(cfg.n_grid.back())));
        const auto it = std::find_if(rep.rows.begin(), rep.rows.end(), [&](const LatticeRow& r) { return r.n == at; });
        const bool ok = it != rep.rows.end() && it->abs_error <= *tol;
        rep.checks.push_back({"|sqrt(n) P - density| <= " + fmt(*tol) + " at n = " + std::to_string(at), ok,
                              it == rep.rows.end() ? "n not in grid" : "error " + fmt(it->abs_error)});
    }
    return rep;
}

CharfnReport run_charfn_compare(const ExperimentConfig& cfg) {
    CharfnReport rep;
    rep.meta = make_meta(cfg);
    auto lc = lsv_context(cfg, true);
    rep.sigma2 = lc.var;
    rep.tail_exponent = 1.0 / cfg.alpha;
    const auto& tab = *lc.table;
    const double mB = tab.base_mass();

    auto integral = [&](const std::string& name) {
        if (name == "zero") return 0.0;
        if (name == "one") return 1.0;
        if (name == "base") return mB;
        return InducedTable(*lc.sys, lsv_observable(name, cfg.alpha), induced_options(cfg.alpha, 2048, cfg.threads))
            .invariant_mean();
    };
    rep.u_integral = integral(cfg.u);
    rep.v_integral = integral(cfg.v);
    const auto u = weight_function(cfg.u), v = weight_function(cfg.v);

    EigenOptions eo;
    eo.require_gap = false;
    eo.compute_left = false;
    eo.resolve_second = false;
    std::vector<cplx> lam;
    for (double t : cfg.t_grid) lam.push_back(leading_eigen(tab.at(t), eo).lambda);

    const SampleOptions so{.threads = cfg.threads, .keep_endpoints = true};
    const double N = static_cast<double>(cfg.samples);
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
        const long n = cfg.n_grid[i];
        const auto b = sample_birkhoff(*lc.sys, lc.f, n, cfg.samples, cfg.seed, i, so);
        std::vector<double> w(b.sums.size());
        for (std::size_t s = 0; s < w.size(); ++s) w[s] = u(b.starts[s]) * v(b.ends[s]);
        for (std::size_t j = 0; j < cfg.t_grid.size(); ++j) {
            const double t = cfg.t_grid[j];
            CompensatedSum<cplx> acc, neg;
            CompensatedSum<double> sq;
            for (std::size_t s = 0; s < w.size(); ++s) {
                const cplx e = w[s] * std::polar(1.0, t * b.sums[s]);
                acc.add(e);
                neg.add(w[s] * std::polar(1.0, -t * b.sums[s]));
                sq.add(std::norm(e));
            }
            CharfnRow r;
            r.n = n;
            r.t = t;
            r.empirical = acc.value() / N;
            rep.symmetry_defect = std::max(rep.symmetry_defect, std::abs(neg.value() / N - std::conj(r.empirical)));
            r.mc_error = std::sqrt(std::max(0.0, sq.value() / N - std::norm(r.empirical)) / N);
            r.predicted = std::pow(1.0 - mB * (1.0 - lam[j]), static_cast<double>(n)) * rep.u_integral * rep.v_integral;
            r.deviation = std::abs(r.empirical - r.predicted);
            r.usable = r.mc_error <= 0.5 * r.deviation;
            rep.rows.push_back(r);
        }
    }

    // Envelope n^{-(beta-1)} + |t| sum_k (k+1)^{-(beta-1)} (1 - d t^2)^{n-k}; d from a small grid,
    // C the smallest constant covering every usable point.
    const double p = rep.tail_exponent - 1.0;
    auto shape = [&](long n, double t, double d) {
        const double q = 1.0 - d * t * t;
        double conv = 0.0, qk = 1.0;
        for (long k = n; k >= 0; --k) {
            conv += std::pow(static_cast<double>(k + 1), -p) * qk;
            qk *= q;
        }
        return std::pow(static_cast<double>(n), -p) + std::abs(t) * conv;
    };
    double tmax = 0.0;
    for (double t : cfg.t_grid) tmax = std::max(tmax, std::abs(t));
    for (double frac : {1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0}) {
        const double d = frac * std::max(rep.sigma2.sigma2, 1e-3);
        if (d * tmax * tmax >= 1.0) continue;
        double C = 0.0;
        bool any = false;
        for (const auto& r : rep.rows)
            if (r.usable) {
                C = std::max(C, r.deviation / shape(r.n, r.t, d));
                any = true;
            }
        if (any && (std::isnan(rep.envelope_constant) || C < rep.envelope_constant)) {
            rep.envelope_constant = C;
            rep.envelope_d = d;
        }
    }
    if (!std::isnan(rep.envelope_d))
        for (auto& r : rep.rows) r.envelope = shape(r.n, r.t, rep.envelope_d);
    if (const auto tol = accept_value(cfg, "symmetry_tolerance"))
        rep.checks.push_back({"empirical phi(-t) = conj phi(t)", rep.symmetry_defect <= *tol,
                              "defect " + fmt(rep.symmetry_defect)});
    return rep;
}

}  // namespace towerlimits
