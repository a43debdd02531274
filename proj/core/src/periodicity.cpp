#include "towerlimits/periodicity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "towerlimits/errors.hpp"

namespace towerlimits {

namespace {

// Minimizer of g on [a, b] by golden-section search.
double golden_min(const std::function<double(double)>& g, double a, double b, double tol) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    double gc = g(c), gd = g(d);
    while (b - a > tol) {
        if (gc < gd) {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

std::vector<cplx> unit_circle_grid(int count) {
    if (count < 1) throw InvalidInput("unit_circle_grid: count must be >= 1");
    std::vector<cplx> z(count);
    for (int k = 0; k < count; ++k) z[k] = std::polar(1.0, 2.0 * std::numbers::pi * k / count);
    return z;
}

PeriodicityReport periodicity_scan(const InducedTable& table, const std::vector<double>& t_grid,
                                   const std::vector<cplx>& z_grid, const PeriodicityOptions& opts) {
    if (t_grid.empty() || z_grid.empty()) throw InvalidInput("periodicity_scan: empty grid");
    PeriodicityReport rep;
    rep.tolerance = opts.tolerance > 0 ? opts.tolerance : 10.0 / table.cells();

    std::vector<double> angles;
    for (const cplx& z : z_grid) {
        if (std::abs(std::abs(z) - 1.0) > 1e-12) throw InvalidInput("periodicity_scan: z must lie on the unit circle");
        angles.push_back(std::arg(z));
    }
    std::sort(angles.begin(), angles.end());
    double spacing = 2.0 * std::numbers::pi;
    for (std::size_t k = 1; k < angles.size(); ++k) spacing = std::min(spacing, angles[k] - angles[k - 1]);
    if (angles.size() > 1)
        spacing = std::min(spacing, angles.front() + 2.0 * std::numbers::pi - angles.back());

    for (double t : t_grid) {
        auto eig = [&](double theta) { return leading_eigen(table.at(t, std::polar(1.0, theta)), opts.eigen).lambda; };
        PeriodicityRow row;
        row.t = t;
        double best_theta = angles.front(), closest_theta = angles.front(), closest = INFINITY;
        row.radius = -1;
        for (double th : angles) {
            const cplx l = eig(th);
            if (std::abs(l) > row.radius) {
                row.radius = std::abs(l);
                best_theta = th;
            }
            if (std::abs(l - 1.0) < closest) {
                closest = std::abs(l - 1.0);
                closest_theta = th;
            }
        }
        if (opts.refine) {
            const double h = angles.size() > 1 ? spacing : std::numbers::pi;
            const double th_r = golden_min([&](double th) { return -std::abs(eig(th)); }, best_theta - h,
                                           best_theta + h, opts.refine_tolerance);
            const double r_r = std::abs(eig(th_r));
            if (r_r > row.radius) {
                row.radius = r_r;
                best_theta = th_r;
            }
            closest_theta = golden_min([&](double th) { return std::abs(eig(th) - 1.0); }, closest_theta - h,
                                       closest_theta + h, opts.refine_tolerance);
        }
        row.z = std::polar(1.0, closest_theta);
        row.lambda = eig(closest_theta);
        row.detected = std::abs(row.lambda - 1.0) < rep.tolerance;
        if (!row.detected) {
            row.z = std::polar(1.0, best_theta);
            row.lambda = eig(best_theta);
        }
        if (t != 0.0) rep.max_radius_off_zero = std::max(rep.max_radius_off_zero, row.radius);
        rep.rows.push_back(row);
    }

    std::vector<double> hits;
    bool all = true;
    for (const auto& r : rep.rows) {
        all = all && r.detected;
        if (r.detected && r.t != 0.0) hits.push_back(std::abs(r.t));
    }
    if (all) {
        rep.group = "R";
    } else if (hits.empty()) {
        rep.group = "{0}";
    } else {
        const double step = *std::min_element(hits.begin(), hits.end());
        bool lattice = true;
        for (const auto& r : rep.rows) {
            const double q = std::abs(r.t) / step;
            const bool multiple = std::abs(q - std::round(q)) < 1e-6 * std::max(1.0, q);
            lattice = lattice && (multiple == r.detected);
        }
        rep.group = lattice ? "lattice" : "irregular";
        if (lattice) rep.lattice_step = step;
    }
    return rep;
}

}  // namespace towerlimits
