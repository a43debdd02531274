#include "towerlimits/numerics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cstdio>
#include <numbers>

#include "towerlimits/errors.hpp"

namespace towerlimits {

double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 16) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

double student_t_quantile_975(std::size_t dof) {
    if (dof == 0) return std::numeric_limits<double>::infinity();
    boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(dist, 0.975);
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y,
                   std::span<const double> weights) {
    if (x.size() != y.size() || (!weights.empty() && weights.size() != x.size()))
        throw InvalidInput("fit_line: size mismatch");
    const std::size_t n = x.size();
    LinearFit fit;
    fit.points = n;
    if (n < 2) throw InvalidInput("fit_line: need at least two points");

    auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w(i);
        sx += w(i) * x[i];
        sy += w(i) * y[i];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += w(i) * (x[i] - mx) * (x[i] - mx);
        sxy += w(i) * (x[i] - mx) * (y[i] - my);
        syy += w(i) * (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0) throw InvalidInput("fit_line: abscissae are all equal");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;

    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += w(i) * r * r;
    }
    fit.r2 = syy > 0 ? 1.0 - rss / syy : 1.0;
    const std::size_t dof = n - 2;
    if (weights.empty()) {
        fit.slope_se = dof > 0 ? std::sqrt(rss / static_cast<double>(dof) / sxx) : 0.0;
    } else {
        // Weights are inverse variances: the formal error is 1/sqrt(sxx); inflate by
        // the reduced chi-square when the scatter exceeds the stated errors.
        const double chi2 = dof > 0 ? rss / static_cast<double>(dof) : 1.0;
        fit.slope_se = std::sqrt(std::max(1.0, chi2) / sxx);
    }
    const double q = dof > 0 ? student_t_quantile_975(dof) : 1.959963984540054;
    fit.ci_low = fit.slope - q * fit.slope_se;
    fit.ci_high = fit.slope + q * fit.slope_se;
    return fit;
}

LinearFit fit_loglog(std::span<const double> x, std::span<const double> y,
                     std::span<const double> weights) {
    std::vector<double> lx, ly, lw;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(y[i] > 0) || !(x[i] > 0)) continue;
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
        if (!weights.empty()) lw.push_back(weights[i]);
    }
    return fit_line(lx, ly, lw);
}

QuadratureRule gauss_legendre(int points) {
    if (points < 1) throw InvalidInput("gauss_legendre: need at least one point");
    QuadratureRule rule;
    rule.nodes.resize(points);
    rule.weights.resize(points);
    const int n = points;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        // Recompute the derivative at the converged node.
        double p0 = 1.0, p1 = 0.0;
        for (int k = 1; k <= n; ++k) {
            const double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        rule.nodes[i] = -z;
        rule.nodes[n - 1 - i] = z;
        rule.weights[i] = rule.weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return rule;
}

double normal_cdf(double x, double sigma) {
    return 0.5 * std::erfc(-x / (sigma * std::numbers::sqrt2));
}

double normal_pdf(double x, double sigma) {
    const double z = x / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace towerlimits
