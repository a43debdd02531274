#include "towerlimits/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "towerlimits/errors.hpp"

namespace towerlimits {

using nlohmann::json;

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// JSON has no NaN; missing values become null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class CsvOut {
public:
    CsvOut(const std::filesystem::path& file, const ReportMeta& meta) : out_(file) {
        if (!out_) throw InvalidInput("cannot write '" + file.string() + "'");
        out_ << "# towerlimits " << meta.version << " kind=" << meta.kind << " config_hash=" << meta.config_hash
             << " seed=" << meta.seed << "\n";
        out_ << "n,statistic,value,stderr\n";
    }
    // stderr: a number, "exact" or "deterministic" (model value, no sampling error)
    void row(long n, const std::string& stat, double value, const std::string& se) {
        out_ << n << ',' << stat << ',' << num(value) << ',' << se << '\n';
    }
    void row(long n, const std::string& stat, double value, double se) { row(n, stat, value, num(se)); }

private:
    std::ofstream out_;
};

json meta_json(const ReportMeta& m) {
    return {{"kind", m.kind},     {"config_hash", m.config_hash}, {"seed", m.seed},      {"version", m.version},
            {"system", m.system}, {"observable", m.observable},   {"samples", m.samples}};
}

json variance_json(const VarianceEstimate& v) {
    return {{"sigma2", v.sigma2},
            {"source", v.source},
            {"spectral", jnum(v.spectral)},
            {"curvature_fit", jnum(v.curvature_fit)},
            {"curvature_converged", v.curvature_converged},
            {"greenkubo", jnum(v.greenkubo)},
            {"greenkubo_se", jnum(v.greenkubo_se)},
            {"disagreement", v.disagreement},
            {"density_bias", jnum(v.density_bias)},
            {"exact", v.exact}};
}

json checks_json(const std::vector<Check>& checks) {
    json a = json::array();
    for (const auto& c : checks) a.push_back({{"rule", c.rule}, {"passed", c.passed}, {"detail", c.detail}});
    return a;
}

json fit_json(const ExponentFit& f) {
    return {{"conclusive", f.conclusive},  {"exponent", jnum(f.exponent)}, {"ci_low", jnum(f.ci_low)},
            {"ci_high", jnum(f.ci_high)},  {"window_low", f.window_low},   {"window_high", f.window_high},
            {"points", f.line.points},     {"intercept", f.line.intercept}};
}

void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file);
    if (!out) throw InvalidInput("cannot write '" + file.string() + "'");
    out << text;
}

WrittenReport paths(const std::filesystem::path& dir, const std::string& kind) {
    std::filesystem::create_directories(dir);
    return {dir / (kind + ".csv"), dir / (kind + ".json"), {}};
}

std::string sigma_tag(const VarianceEstimate& v) { return v.exact ? "exact" : "deterministic"; }

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

std::vector<double> ns_of(const auto& rows) {
    std::vector<double> x;
    for (const auto& r : rows) x.push_back(static_cast<double>(r.n));
    return x;
}

// Fitted power law evaluated on the window ends.
PlotSeries fit_series(const std::string& label, const ExponentFit& f) {
    PlotSeries s{label, {}, {}, true};
    if (!f.conclusive) return s;
    for (long n : {f.window_low, f.window_high}) {
        s.x.push_back(static_cast<double>(n));
        s.y.push_back(std::exp(f.line.intercept + f.line.slope * std::log(static_cast<double>(n))));
    }
    return s;
}

}  // namespace

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buf;
}

void write_manifest(const RunManifest& m, const std::filesystem::path& file) {
    json outputs = json::array();
    for (const auto& p : m.outputs) outputs.push_back(p.string());
    const json j = {{"command", m.command},     {"config_path", m.config_path.string()},
                    {"config_hash", m.config_hash}, {"seed", m.seed},
                    {"threads", m.threads},     {"started", m.started},
                    {"finished", m.finished},   {"version", library_version()},
                    {"outputs", outputs}};
    write_text(file, j.dump(2) + "\n");
}

std::string loglog_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<PlotSeries>& series) {
    constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 60;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
            if (s.x[i] > 0 && s.y[i] > 0) {
                x0 = std::min(x0, std::log10(s.x[i]));
                x1 = std::max(x1, std::log10(s.x[i]));
                y0 = std::min(y0, std::log10(s.y[i]));
                y1 = std::max(y1, std::log10(s.y[i]));
            }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    x0 = std::floor(x0), x1 = std::max(std::ceil(x1), x0 + 1);
    y0 = std::floor(y0), y1 = std::max(std::ceil(y1), y0 + 1);
    auto px = [&](double v) { return L + (std::log10(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (std::log10(v) - y0) / (y1 - y0) * (H - T - B); };

    static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title)
      << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double e = x0; e <= x1; ++e) {
        const double x = px(std::pow(10.0, e));
        o << "<line x1=\"" << x << "\" y1=\"" << T << "\" x2=\"" << x << "\" y2=\"" << H - B
          << "\" stroke=\"#ddd\"/>\n<text x=\"" << x << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">1e"
          << e << "</text>\n";
    }
    for (double e = y0; e <= y1; ++e) {
        const double y = py(std::pow(10.0, e));
        o << "<line x1=\"" << L << "\" y1=\"" << y << "\" x2=\"" << W - R << "\" y2=\"" << y
          << "\" stroke=\"#ddd\"/>\n<text x=\"" << L - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e
          << "</text>\n";
    }
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << svg_escape(x_label)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\">" << svg_escape(y_label) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* c = colors[k % std::size(colors)];
        std::ostringstream pts;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
            if (s.x[i] > 0 && s.y[i] > 0) {
                if (s.line) pts << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
                else
                    o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << c
                      << "\"/>\n";
            }
        if (s.line) o << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << c << "\"/>\n";
        const double ly = T + 14 + 16 * static_cast<double>(k);
        o << "<text x=\"" << W - R - 8 << "\" y=\"" << ly << "\" text-anchor=\"end\" fill=\"" << c << "\">"
          << svg_escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string to_json_text(const CltReport& r) {
    json rows = json::array();
    for (const auto& x : r.rows)
        rows.push_back({{"n", x.n}, {"mean", x.mean}, {"mean_se", x.mean_se}, {"variance", x.variance},
                        {"ks", x.ks}, {"noise_floor", x.noise_floor}});
    return json{{"meta", meta_json(r.meta)}, {"sigma2", variance_json(r.sigma2)}, {"degenerate", r.degenerate},
                {"decreasing", r.decreasing}, {"rows", rows}, {"checks", checks_json(r.checks)}}
               .dump(2) + "\n";
}

std::string to_json_text(const BeReport& r) {
    auto rows_json = [](const std::vector<BeRow>& v) {
        json a = json::array();
        for (const auto& x : v)
            a.push_back({{"n", x.n}, {"ks", x.ks}, {"noise_floor", x.noise_floor}, {"in_window", x.in_window}});
        return a;
    };
    json j{{"meta", meta_json(r.meta)},      {"sigma2", variance_json(r.sigma2)}, {"rows", rows_json(r.rows)},
           {"fit", fit_json(r.fit)},         {"predicted", jnum(r.predicted)},   {"status", r.status},
           {"checks", checks_json(r.checks)}};
    if (r.calibration_rows) {
        j["calibration"] = {{"rows", rows_json(*r.calibration_rows)},
                            {"fit", fit_json(r.calibration)},
                            {"contains_half", r.calibration_ok}};
    }
    return j.dump(2) + "\n";
}

std::string to_json_text(const LltReport& r) {
    json rows = json::array();
    for (const auto& x : r.rows)
        rows.push_back({{"n", x.n}, {"k", x.k}, {"hits", x.hits}, {"scaled", x.scaled}, {"target", x.target},
                        {"ratio", x.ratio}, {"ratio_se", x.ratio_se}});
    return json{{"meta", meta_json(r.meta)},
                {"sigma2", variance_json(r.sigma2)},
                {"scan", {{"group", r.scan_group}, {"max_radius_off_zero", jnum(r.scan_max_radius)}}},
                {"rows", rows},
                {"checks", checks_json(r.checks)}}
               .dump(2) + "\n";
}

std::string to_json_text(const LatticeReport& r) {
    json rows = json::array();
    for (const auto& x : r.rows)
        rows.push_back({{"n", x.n}, {"k", x.k}, {"probability", x.probability}, {"scaled", x.scaled},
                        {"target", jnum(x.target)}, {"abs_error", jnum(x.abs_error)}, {"mass_defect", x.mass_defect}});
    return json{{"meta", meta_json(r.meta)}, {"sigma2", r.sigma2},       {"rho", r.rho},
                {"span", r.span},           {"degenerate", r.degenerate}, {"exact", true},
                {"rows", rows},             {"checks", checks_json(r.checks)}}
               .dump(2) + "\n";
}

std::string to_json_text(const CharfnReport& r) {
    json rows = json::array();
    for (const auto& x : r.rows)
        rows.push_back({{"n", x.n},
                        {"t", x.t},
                        {"empirical", {x.empirical.real(), x.empirical.imag()}},
                        {"mc_error", x.mc_error},
                        {"predicted", {x.predicted.real(), x.predicted.imag()}},
                        {"deviation", x.deviation},
                        {"usable", x.usable},
                        {"envelope", x.envelope}});
    return json{{"meta", meta_json(r.meta)},
                {"sigma2", variance_json(r.sigma2)},
                {"tail_exponent", r.tail_exponent},
                {"envelope", {{"C", jnum(r.envelope_constant)}, {"d", jnum(r.envelope_d)}}},
                {"u_integral", r.u_integral},
                {"v_integral", r.v_integral},
                {"symmetry_defect", r.symmetry_defect},
                {"rows", rows},
                {"checks", checks_json(r.checks)}}
               .dump(2) + "\n";
}

WrittenReport write_report(const CltReport& r, const std::filesystem::path& dir, bool plot) {
    auto w = paths(dir, "clt");
    CsvOut csv(w.csv, r.meta);
    for (const auto& x : r.rows) {
        csv.row(x.n, "mean", x.mean, x.mean_se);
        csv.row(x.n, "variance", x.variance, x.variance * std::sqrt(2.0 / static_cast<double>(r.meta.samples)));
        csv.row(x.n, "ks", x.ks, x.noise_floor / 1.63 * 0.5);
        csv.row(x.n, "noise_floor", x.noise_floor, "deterministic");
        csv.row(x.n, "sigma2_target", r.sigma2.sigma2, sigma_tag(r.sigma2));
    }
    write_text(w.json, to_json_text(r));
    if (plot) {
        w.svg = dir / "clt.svg";
        std::vector<double> ks, floor;
        for (const auto& x : r.rows) ks.push_back(x.ks), floor.push_back(x.noise_floor);
        write_text(w.svg, loglog_svg("KS distance to N(0, sigma2)  [" + r.meta.config_hash + "]", "n", "KS",
                                     {{"KS", ns_of(r.rows), ks, false}, {"noise floor", ns_of(r.rows), floor, true}}));
    }
    return w;
}

WrittenReport write_report(const BeReport& r, const std::filesystem::path& dir, bool plot) {
    auto w = paths(dir, "berry_esseen");
    CsvOut csv(w.csv, r.meta);
    const double ks_se = 0.5 / std::sqrt(static_cast<double>(r.meta.samples));
    for (const auto& x : r.rows) {
        csv.row(x.n, "ks", x.ks, ks_se);
        csv.row(x.n, "noise_floor", x.noise_floor, "deterministic");
        csv.row(x.n, "in_window", x.in_window ? 1.0 : 0.0, "exact");
    }
    if (r.calibration_rows)
        for (const auto& x : *r.calibration_rows) csv.row(x.n, "calibration_ks", x.ks, ks_se);
    csv.row(0, "exponent", r.fit.exponent, r.fit.line.slope_se);
    csv.row(0, "predicted_exponent", r.predicted, "exact");
    csv.row(0, "calibration_exponent", r.calibration.exponent, r.calibration.line.slope_se);
    write_text(w.json, to_json_text(r));
    if (plot) {
        w.svg = dir / "berry_esseen.svg";
        std::vector<double> ks, floor3;
        for (const auto& x : r.rows) ks.push_back(x.ks), floor3.push_back(3.0 * x.noise_floor);
        std::vector<PlotSeries> s{{"KS", ns_of(r.rows), ks, false},
                                  fit_series("fit, exponent " + num(r.fit.exponent).substr(0, 6), r.fit),
                                  {"3x noise floor", ns_of(r.rows), floor3, true}};
        if (r.calibration_rows) {
            std::vector<double> c;
            for (const auto& x : *r.calibration_rows) c.push_back(x.ks);
            s.push_back({"i.i.d. calibration", ns_of(*r.calibration_rows), c, false});
            s.push_back(fit_series("calibration fit", r.calibration));
        }
        write_text(w.svg, loglog_svg("Berry-Esseen rate  [" + r.meta.config_hash + "]", "n", "KS", s));
    }
    return w;
}

WrittenReport write_report(const LltReport& r, const std::filesystem::path& dir, bool plot) {
    auto w = paths(dir, "llt");
    CsvOut csv(w.csv, r.meta);
    for (const auto& x : r.rows) {
        csv.row(x.n, "scaled_fraction", x.scaled, x.ratio_se * x.target);
        csv.row(x.n, "target", x.target, sigma_tag(r.sigma2));
        csv.row(x.n, "ratio", x.ratio, x.ratio_se);
        csv.row(x.n, "hits", x.hits, "exact");
    }
    write_text(w.json, to_json_text(r));
    if (plot) {
        w.svg = dir / "llt.svg";
        std::vector<double> ratio, one;
        for (const auto& x : r.rows) ratio.push_back(x.ratio), one.push_back(1.0);
        write_text(w.svg, loglog_svg("Local limit ratio  [" + r.meta.config_hash + "]", "n", "sqrt(n) P / target",
                                     {{"ratio", ns_of(r.rows), ratio, false}, {"1", ns_of(r.rows), one, true}}));
    }
    return w;
}

WrittenReport write_report(const LatticeReport& r, const std::filesystem::path& dir, bool plot) {
    auto w = paths(dir, "lattice_llt");
    CsvOut csv(w.csv, r.meta);
    for (const auto& x : r.rows) {
        csv.row(x.n, "probability", x.probability, "exact");
        csv.row(x.n, "scaled", x.scaled, "exact");
        csv.row(x.n, "target", x.target, "exact");
        csv.row(x.n, "abs_error", x.abs_error, "exact");
        csv.row(x.n, "mass_defect", x.mass_defect, "exact");
    }
    write_text(w.json, to_json_text(r));
    if (plot) {
        w.svg = dir / "lattice_llt.svg";
        std::vector<double> err;
        for (const auto& x : r.rows) err.push_back(x.abs_error);
        write_text(w.svg, loglog_svg("Lattice local limit error  [" + r.meta.config_hash + "]", "n",
                                     "|sqrt(n) P - density|", {{"error", ns_of(r.rows), err, false}}));
    }
    return w;
}

WrittenReport write_report(const CharfnReport& r, const std::filesystem::path& dir, bool plot) {
    auto w = paths(dir, "charfn");
    CsvOut csv(w.csv, r.meta);
    for (const auto& x : r.rows) {
        const std::string at = "@t=" + num(x.t);
        csv.row(x.n, "re_empirical" + at, x.empirical.real(), x.mc_error);
        csv.row(x.n, "im_empirical" + at, x.empirical.imag(), x.mc_error);
        csv.row(x.n, "re_predicted" + at, x.predicted.real(), "deterministic");
        csv.row(x.n, "im_predicted" + at, x.predicted.imag(), "deterministic");
        csv.row(x.n, "deviation" + at, x.deviation, x.mc_error);
        csv.row(x.n, "envelope" + at, x.envelope * r.envelope_constant, "deterministic");
        csv.row(x.n, "usable" + at, x.usable ? 1.0 : 0.0, "exact");
    }
    write_text(w.json, to_json_text(r));
    if (plot) {
        w.svg = dir / "charfn.svg";
        std::vector<PlotSeries> s;
        std::vector<double> ts;
        for (const auto& x : r.rows)
            if (std::find(ts.begin(), ts.end(), x.t) == ts.end()) ts.push_back(x.t);
        for (double t : ts) {
            PlotSeries dev{"deviation t=" + num(t).substr(0, 5), {}, {}, false};
            PlotSeries env{"envelope t=" + num(t).substr(0, 5), {}, {}, true};
            for (const auto& x : r.rows)
                if (x.t == t) {
                    dev.x.push_back(static_cast<double>(x.n));
                    dev.y.push_back(x.deviation);
                    env.x.push_back(static_cast<double>(x.n));
                    env.y.push_back(x.envelope * r.envelope_constant);
                }
            s.push_back(std::move(dev));
            if (std::isfinite(r.envelope_constant)) s.push_back(std::move(env));
        }
        write_text(w.svg, loglog_svg("Characteristic function deviation  [" + r.meta.config_hash + "]", "n",
                                     "|phi_emp - phi_pred|", s));
    }
    return w;
}

}  // namespace towerlimits
