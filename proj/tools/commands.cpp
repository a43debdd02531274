#include "commands.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "towerlimits/config.hpp"
#include "towerlimits/errors.hpp"
#include "towerlimits/finite_tower.hpp"
#include "towerlimits/induced_operator.hpp"
#include "towerlimits/limit_lab.hpp"
#include "towerlimits/periodicity.hpp"
#include "towerlimits/renewal.hpp"
#include "towerlimits/report.hpp"
#include "towerlimits/seq_algebra.hpp"
#include "towerlimits/seq_io.hpp"
#include "towerlimits/spectral.hpp"
#include "towerlimits/tower_operators.hpp"

namespace towerlimits::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// for messages; files keep full precision
std::string brief(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Hash of the arguments for commands that run without a config file.
std::string args_hash(const std::vector<std::pair<std::string, std::string>>& args) {
    Config c;
    for (const auto& [k, v] : args) c.set(k, v);
    return c.hash_hex();
}

class Csv {
public:
    Csv(const fs::path& file, const std::string& hash, const std::string& header) : out_(file) {
        if (!out_) throw InvalidInput("cannot write '" + file.string() + "'");
        out_ << "# towerlimits " << library_version() << " config_hash=" << hash << "\n" << header << "\n";
    }
    template <class... T>
    void row(const T&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << "\n";
    }

private:
    static std::string cell(double v) { return num(v); }
    static std::string cell(long v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }
    std::ofstream out_;
};

void write_json(const fs::path& file, const json& j) {
    std::ofstream out(file);
    if (!out) throw InvalidInput("cannot write '" + file.string() + "'");
    out << j.dump(2) << "\n";
}

fs::path prepare(const Common& c) {
    fs::create_directories(c.out_dir);
    return c.out_dir;
}

void finish(const std::string& command, const fs::path& config, const std::string& hash, const Common& c,
            const std::string& started, std::vector<fs::path> outputs, std::optional<std::uint64_t> seed = {}) {
    RunManifest m;
    m.command = command;
    m.config_path = config;
    m.config_hash = hash;
    m.seed = seed.value_or(c.seed.value_or(0));
    m.threads = c.threads;
    m.started = started;
    m.finished = utc_timestamp();
    for (auto& p : outputs) p = p.lexically_relative(c.out_dir);
    m.outputs = std::move(outputs);
    write_manifest(m, c.out_dir / (command + ".manifest.json"));
}

std::vector<double> parse_grid(const std::string& text) { return Config::parse("g = " + text).numbers("g"); }

int print_checks(const std::vector<Check>& checks) {
    bool ok = true;
    for (const auto& c : checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.rule << " (" << c.detail << ")\n";
        ok = ok && c.passed;
    }
    return ok ? kOk : kFailure;
}

TowerObservable pick_observable(const FiniteTower& t, const std::string& name) {
    if (!name.empty()) return t.observable(name);
    if (!t.observables().empty()) return t.observables().begin()->second;
    std::vector<std::vector<double>> zero;
    for (const auto& cell : t.cells()) zero.emplace_back(cell.return_time, 0.0);
    return TowerObservable::cellwise("zero", zero);
}

int verify_identities(const Config& cfg, const Common& c, const fs::path& base, const std::string& started) {
    cfg.require_known({"experiment.kind", "system.tower", "system.t", "system.n", "observable.name",
                       "accept.tolerance"});
    const std::string hash = cfg.hash_hex();
    const double tol = cfg.number("accept.tolerance", 1e-12);
    const auto ts = cfg.has("system.t") ? cfg.numbers("system.t") : std::vector<double>{0.0, 0.37, 1.1};
    const int n_max = static_cast<int>(cfg.integer("system.n", 30));
    std::vector<Check> checks;
    const fs::path dir = prepare(c);
    const fs::path csv_path = dir / "identities.csv";
    Csv csv(csv_path, hash, "tower,n,t,decomposition_residual,renewal_mismatch");
    std::string list = cfg.text("system.tower");
    for (std::size_t p = 0; p <= list.size();) {
        const auto q = std::min(list.find(',', p), list.size());
        std::string name = list.substr(p, q - p);
        name.erase(0, name.find_first_not_of(' '));
        name.erase(name.find_last_not_of(' ') + 1);
        p = q + 1;
        fs::path path(name);
        if (path.is_relative()) path = base / path;
        const auto tower = load_tower(path);
        const auto f = pick_observable(tower, cfg.text("observable.name", ""));
        double worst = 0.0;
        for (double t : ts)
            for (int n = 0; n <= n_max; ++n) {
                const auto r = decompose_iterate(tower, f, t, n);
                worst = std::max({worst, r.residual, r.renewal_mismatch});
                csv.row(path.filename().string(), n, t, r.residual, r.renewal_mismatch);
            }
        const auto b = boundary_identities(tower, c.seed.value_or(1));
        checks.push_back({path.filename().string() + ": decomposition residual <= " + brief(tol), worst <= tol,
                          "max " + brief(worst)});
        checks.push_back({path.filename().string() + ": boundary identities", b.ok(),
                          "A " + brief(b.a_identity_error) + ", B " + brief(b.b_identity_error) + ", C excess " +
                              brief(b.c_bound_excess)});
    }
    finish("verify", {}, hash, c, started, {csv_path});
    return print_checks(checks);
}

int verify_scan(const Config& cfg, const Common& c, const std::string& started) {
    cfg.require_known({"experiment.kind", "experiment.threads", "system.alpha", "observable.name",
                       "observable.center", "scan.t_grid", "scan.z", "scan.cells", "accept.radius_margin"});
    const std::string hash = cfg.hash_hex();
    const double alpha = cfg.number("system.alpha");
    const LsvSystem sys(alpha);
    auto f = lsv_observable(cfg.text("observable.name", "logderiv"), alpha);
    if (cfg.flag("observable.center", true)) f = centered(f, sys);
    InducedOptions o;
    o.cells = static_cast<int>(cfg.integer("scan.cells", 1024));
    o.n_max = std::max(50, branches_for_tail(alpha, 1e-6));
    o.threads = c.threads;
    const InducedTable table(sys, f, o);
    const auto rep = periodicity_scan(table, cfg.numbers("scan.t_grid"),
                                      unit_circle_grid(static_cast<int>(cfg.integer("scan.z", 32))));
    const fs::path dir = prepare(c);
    const fs::path csv_path = dir / "scan.csv";
    Csv csv(csv_path, hash, "t,re_lambda,im_lambda,radius,arg_z,detected");
    for (const auto& r : rep.rows)
        csv.row(r.t, r.lambda.real(), r.lambda.imag(), r.radius, std::arg(r.z), r.detected ? 1 : 0);
    std::vector<Check> checks;
    if (cfg.has("accept.radius_margin")) {
        const double bound = 1.0 - cfg.number("accept.radius_margin") / o.cells;
        checks.push_back({"spectral radius away from t = 0 at most " + brief(bound), rep.max_radius_off_zero <= bound,
                          "max " + brief(rep.max_radius_off_zero) + ", group " + rep.group});
    }
    std::cout << "group " << rep.group << ", max radius off zero " << rep.max_radius_off_zero << "\n";
    finish("verify", {}, hash, c, started, {csv_path});
    return print_checks(checks);
}

template <class Report>
int emit(const Report& rep, const Common& c, const fs::path& config, const std::string& started) {
    const auto w = write_report(rep, prepare(c), c.plot);
    std::vector<fs::path> outs{w.csv, w.json};
    if (!w.svg.empty()) outs.push_back(w.svg);
    finish("verify", config, rep.meta.config_hash, c, started, outs, rep.meta.seed);
    return print_checks(rep.checks);
}

}  // namespace

int cmd_algebra(const AlgebraArgs& a, const Common& c) {
    const auto started = utc_timestamp();
    const fs::path dir = prepare(c);
    if (a.action == "envelope") {
        const auto hash = args_hash({{"gamma", num(a.gamma)}, {"d", num(a.d)}, {"t", num(a.t)},
                                     {"n_max", std::to_string(a.n_max)}});
        const auto r = verify_convolution_envelope(a.gamma, a.d, a.t, a.n_max);
        const fs::path out = dir / "envelope.csv";
        Csv csv(out, hash, "n,lhs,envelope,margin");
        for (std::size_t i = 0; i < r.lhs.size(); ++i)
            csv.row(static_cast<long>(i) - r.n_max, r.lhs[i], r.envelope[i], r.C * r.envelope[i] - r.lhs[i]);
        std::cout << "C = " << brief(r.C) << " at n = " << r.argmax_n << ", min margin " << brief(r.min_margin) << "\n";
        finish("algebra", {}, hash, c, started, {out});
        return r.min_margin >= 0 && std::isfinite(r.C) ? kOk : kFailure;
    }
    const auto seq = load_seq(a.input);
    const auto hash = args_hash({{"action", a.action}, {"input", fs::absolute(a.input).string()},
                                 {"side", a.side}, {"n_out", std::to_string(a.n_out)}});
    if (a.action == "norm") {
        const auto k = compute_algebra_constant(seq.gamma());
        std::cout << "norm " << brief(ogamma_norm(seq, k)) << " (gamma " << seq.gamma() << ", constant " << brief(k.c)
                  << ")\n";
        finish("algebra", {}, hash, c, started, {});
        return kOk;
    }
    if (a.action != "invert") throw InvalidInput("algebra: unknown action '" + a.action + "'");
    const Side side = a.side.empty() ? seq.side() : side_from_string(a.side);
    if (side != seq.side()) throw InvalidInput("algebra invert: the file holds a " + std::string(to_string(seq.side())) +
                                               " sequence, --side asks for " + to_string(side));
    const auto inv = side == Side::causal ? causal_invert(seq, a.n_out) : circle_invert(seq, a.n_out);
    const double residual = identity_residual(convolve(seq, inv), inv.n_min(), inv.n_max());
    const fs::path seq_out = dir / (a.input.stem().string() + "_inverse.seq");
    save_seq(seq_out, inv);
    const fs::path rep_out = dir / (a.input.stem().string() + "_inverse.json");
    write_json(rep_out, {{"config_hash", hash},
                         {"input", a.input.string()},
                         {"side", to_string(side)},
                         {"n_min", inv.n_min()},
                         {"n_max", inv.n_max()},
                         {"identity_residual", residual}});
    std::cout << "wrote " << seq_out.string() << ", identity residual " << brief(residual) << "\n";
    finish("algebra", {}, hash, c, started, {seq_out, rep_out});
    return kOk;
}

int cmd_tower(const TowerArgs& a, const Common& c) {
    const auto started = utc_timestamp();
    const auto tower = load_tower(a.tower);
    const auto hash = args_hash({{"tower", fs::absolute(a.tower).string()}, {"observable", a.observable}});
    const auto b = boundary_identities(tower, c.seed.value_or(1));
    json j{{"config_hash", hash},
           {"cells", tower.cell_count()},
           {"states", tower.state_count()},
           {"base_mass", tower.base_mass()},
           {"return_time_gcd", tower.return_time_gcd()},
           {"boundary",
            {{"a_identity_error", b.a_identity_error},
             {"b_identity_error", b.b_identity_error},
             {"c_bound_excess", b.c_bound_excess},
             {"ok", b.ok()}}}};
    std::cout << tower.cell_count() << " cells, " << tower.state_count() << " states, m(B) " << brief(tower.base_mass())
              << "\nboundary identities: A " << brief(b.a_identity_error) << ", B " << brief(b.b_identity_error)
              << ", C excess " << brief(b.c_bound_excess) << (b.ok() ? " ok" : " FAILED") << "\n";
    if (!a.observable.empty() || !tower.observables().empty()) {
        const auto f = pick_observable(tower, a.observable);
        const double mean = tower.integrate(f), var = tower_variance(tower, f);
        j["observable"] = {{"name", f.name()}, {"mean", mean}, {"sigma2", var}};
        std::cout << "observable " << f.name() << ": mean " << brief(mean) << ", sigma2 " << brief(var);
        try {
            const int span = lattice_span(tower, f);
            j["observable"]["lattice_span"] = span;
            std::cout << ", lattice span " << span;
        } catch (const InvalidInput&) {
            // not integer-valued
        }
        std::cout << "\n";
    }
    const fs::path out = prepare(c) / (a.tower.stem().string() + "_tower.json");
    write_json(out, j);
    finish("tower", {}, hash, c, started, {out});
    return b.ok() ? kOk : kFailure;
}

int cmd_renewal(const RenewalArgs& a, const Common& c) {
    const auto started = utc_timestamp();
    const fs::path dir = prepare(c);
    if (!a.tower.empty()) {
        const auto tower = load_tower(a.tower);
        const auto f = pick_observable(tower, a.observable);
        const auto hash = args_hash({{"tower", fs::absolute(a.tower).string()}, {"observable", f.name()},
                                     {"n", std::to_string(a.n)}, {"t", num(a.t)}});
        const fs::path out = dir / "decomposition.csv";
        Csv csv(out, hash, "n,residual,renewal_mismatch");
        double worst = 0.0;
        for (int n = 0; n <= a.n; ++n) {
            const auto r = decompose_iterate(tower, f, a.t, n);
            csv.row(n, r.residual, r.renewal_mismatch);
            worst = std::max(worst, r.residual);
        }
        const auto last = decompose_iterate(tower, f, a.t, a.n);
        std::cout << "identity residual at n = " << a.n << ", t = " << a.t << ": " << brief(last.residual)
                  << " (max over n <= " << a.n << ": " << brief(worst) << ")\n";
        finish("renewal", {}, hash, c, started, {out});
        return kOk;
    }
    if (a.spec.empty()) throw InvalidInput("renewal: give --tower or --spec");
    const auto spec = load_renewal_spec(a.spec);
    const auto hash = args_hash({{"spec", fs::absolute(a.spec).string()}, {"n_out", std::to_string(a.n_out)}});
    const auto r = verify_renewal_limit(spec, a.n_out);
    const fs::path out = dir / "renewal_rate.csv";
    Csv csv(out, hash, "n,error");
    for (std::size_t n = 0; n < r.error.size(); ++n) csv.row(static_cast<long>(n), r.error[n]);
    std::cout << "decay exponent " << brief(r.exponent) << " on n in [" << r.fit_lo << ", " << r.fit_hi
              << "], design beta - 1 = " << spec.beta - 1 << "\n";
    finish("renewal", {}, hash, c, started, {out});
    return kOk;
}

int cmd_operator(const OperatorArgs& a, const Common& c) {
    const auto started = utc_timestamp();
    const auto hash = args_hash({{"action", a.action},
                                 {"alpha", num(a.alpha)},
                                 {"f", a.observable},
                                 {"center", a.center ? "1" : "0"},
                                 {"t", a.t_grid},
                                 {"cells", std::to_string(a.cells)},
                                 {"z", std::to_string(a.z_points)}});
    const LsvSystem sys(a.alpha);
    auto f = lsv_observable(a.observable, a.alpha);
    if (a.center) f = centered(f, sys);
    InducedOptions o;
    o.cells = a.cells;
    o.n_max = std::max(50, branches_for_tail(a.alpha, 1e-6));
    o.threads = c.threads;
    const InducedTable table(sys, f, o);
    const auto ts = parse_grid(a.t_grid);
    const fs::path dir = prepare(c);
    if (a.action == "scan") {
        const auto rep = periodicity_scan(table, ts, unit_circle_grid(a.z_points));
        const fs::path csv_path = dir / "scan.csv", json_path = dir / "scan.json";
        Csv csv(csv_path, hash, "t,re_lambda,im_lambda,radius,arg_z,detected");
        json rows = json::array();
        for (const auto& r : rep.rows) {
            csv.row(r.t, r.lambda.real(), r.lambda.imag(), r.radius, std::arg(r.z), r.detected ? 1 : 0);
            rows.push_back({{"t", r.t}, {"radius", r.radius}, {"arg_z", std::arg(r.z)}, {"detected", r.detected}});
        }
        write_json(json_path, {{"config_hash", hash},
                               {"group", rep.group},
                               {"lattice_step", rep.lattice_step},
                               {"tolerance", rep.tolerance},
                               {"max_radius_off_zero", rep.max_radius_off_zero},
                               {"rows", rows}});
        std::cout << "group " << rep.group << ", max radius off t = 0: " << brief(rep.max_radius_off_zero)
                  << ", tolerance " << brief(rep.tolerance) << "\n";
        finish("operator", {}, hash, c, started, {csv_path, json_path});
        return kOk;
    }
    if (a.action != "eigen") throw InvalidInput("operator: unknown action '" + a.action + "'");
    const auto sd = spectral_data(table, geometric_grid(0.02, 0.5, 5));
    const fs::path csv_path = dir / "eigen.csv", json_path = dir / "eigen.json";
    Csv csv(csv_path, hash, "t,re_lambda,im_lambda,gap,flags");
    EigenOptions eo;
    eo.require_gap = false;
    eo.compute_left = false;
    for (double t : ts) {
        const auto e = leading_eigen(table.at(t), eo);
        const double gap = std::abs(e.lambda) - e.second_modulus;
        csv.row(t, e.lambda.real(), e.lambda.imag(), gap, gap < 0.05 ? "small_gap" : "");
    }
    write_json(json_path, {{"config_hash", hash},
                           {"sigma2", sd.sigma2},
                           {"curvature_fit", sd.curvature.sigma2},
                           {"curvature_converged", sd.curvature.converged},
                           {"m_B", sd.m_B},
                           {"density_m_B", table.density_base_mass()},
                           {"tail_mass", table.tail_mass()},
                           {"poisson_residual", sd.poisson_residual}});
    std::cout << "sigma2 " << brief(sd.sigma2) << " (curvature fit " << brief(sd.curvature.sigma2)
              << (sd.curvature.converged ? "" : ", not converged") << "), m(B) " << brief(sd.m_B) << "\n";
    finish("operator", {}, hash, c, started, {csv_path, json_path});
    return kOk;
}

int cmd_verify(const VerifyArgs& a, const Common& c) {
    const auto started = utc_timestamp();
    Config cfg = Config::load(a.config);
    if (c.seed) cfg.set("experiment.seed", std::to_string(*c.seed));
    const fs::path base = a.config.parent_path();
    const std::string kind = cfg.text("experiment.kind");
    if (kind == "identities") return verify_identities(cfg, c, base, started);
    if (kind == "scan") return verify_scan(cfg, c, started);
    auto x = experiment_config(cfg, base);
    if (!cfg.has("experiment.threads")) x.threads = c.threads;
    switch (x.kind) {
        case ExperimentKind::clt: return emit(run_clt(x), c, a.config, started);
        case ExperimentKind::berry_esseen: {
            const auto rep = run_berry_esseen(x);
            std::cout << "status: " << rep.status << "\n";
            return emit(rep, c, a.config, started);
        }
        case ExperimentKind::llt: return emit(run_llt(x), c, a.config, started);
        case ExperimentKind::lattice_llt: return emit(run_lattice_llt(x), c, a.config, started);
        case ExperimentKind::charfn: return emit(run_charfn_compare(x), c, a.config, started);
    }
    return kUsage;
}

}  // namespace towerlimits::cli
