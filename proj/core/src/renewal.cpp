#include "towerlimits/renewal.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "towerlimits/errors.hpp"

namespace towerlimits {

RenewalSpec make_renewal_spec(WeightedSeq R, double beta, std::string source) {
    if (R.side() != Side::causal) throw InvalidInput("renewal spec: R must be causal");
    if (R.at(0).cwiseAbs().maxCoeff() != 0.0) throw InvalidInput("renewal spec: R_0 must vanish");
    if (!(beta > 2.0)) throw InvalidInput("renewal spec: tail exponent beta must exceed 2");
    const int d = R.dim();
    Eigen::MatrixXd R1 = Eigen::MatrixXd::Zero(d, d), dR1 = Eigen::MatrixXd::Zero(d, d);
    for (long n = 1; n <= R.n_max(); ++n) {
        R1 += R.at(n);
        dR1 += static_cast<double>(n) * R.at(n);
    }
    Eigen::EigenSolver<Eigen::MatrixXd> right(R1), left(R1.transpose());
    auto closest = [](const Eigen::VectorXcd& ev, int* second) {
        int best = 0;
        for (int i = 1; i < ev.size(); ++i)
            if (std::abs(ev(i) - 1.0) < std::abs(ev(best) - 1.0)) best = i;
        if (second) {
            *second = -1;
            for (int i = 0; i < ev.size(); ++i)
                if (i != best && (*second < 0 || std::abs(ev(i) - 1.0) < std::abs(ev(*second) - 1.0)))
                    *second = i;
        }
        return best;
    };
    int second = -1;
    const int ir = closest(right.eigenvalues(), &second);
    const int il = closest(left.eigenvalues(), nullptr);
    const cplx lam = right.eigenvalues()(ir);
    if (std::abs(lam - 1.0) > 1e-10) {
        std::ostringstream msg;
        msg << "renewal spec: R(1) has no eigenvalue 1 (closest " << lam << ")";
        throw InvalidInput(msg.str());
    }
    if (second >= 0 && std::abs(right.eigenvalues()(second) - 1.0) < 1e-8)
        throw InvalidInput("renewal spec: eigenvalue 1 of R(1) is not simple");
    const Eigen::VectorXd r = right.eigenvectors().col(ir).real();
    Eigen::VectorXd l = left.eigenvectors().col(il).real();
    l /= l.dot(r);

    RenewalSpec spec;
    spec.R = std::move(R);
    spec.beta = beta;
    spec.P = r * l.transpose();
    spec.mu = l.dot(dR1 * r);
    spec.source = std::move(source);
    if (!(spec.mu > 0)) throw InvalidInput("renewal spec: mu = " + std::to_string(spec.mu) + " is not positive");
    return spec;
}

RenewalSpec renewal_spec_from_tower(const FiniteTower& tower) {
    const std::size_t c = tower.cell_count();
    const int H = tower.max_return_time();
    WeightedSeq R(0, H, static_cast<int>(c), 3.0, Side::causal);
    for (std::size_t i = 0; i < c; ++i) {
        const auto& ci = tower.cell(i);
        for (std::size_t j = 0; j < c; ++j)
            R.at(ci.return_time)(j, i) += ci.mass * ci.row[j] / tower.cell(j).mass;
    }
    return make_renewal_spec(std::move(R), 3.0, "finite tower");
}

RenewalSpec synthetic_renewal_spec(double beta, long terms, int dim, std::uint64_t seed) {
    if (terms < 1) throw InvalidInput("synthetic renewal spec: terms must be >= 1");
    if (dim < 1) throw InvalidInput("synthetic renewal spec: dim must be >= 1");
    std::vector<double> p(terms + 1, 0.0);
    CompensatedSum<double> z;
    for (long n = terms; n >= 1; --n) {
        p[n] = std::pow(static_cast<double>(n), -(beta + 1.0));
        z.add(p[n]);
    }
    WeightedSeq R(0, terms, dim, beta + 1.0, Side::causal);
    SplitMix64 rng(stream_key(seed, 0x5e));
    for (long n = 1; n <= terms; ++n) {
        auto e = R.at(n);
        if (dim == 1) {
            e(0, 0) = p[n] / z.value();
            continue;
        }
        for (int i = 0; i < dim; ++i) {
            double s = 0;
            for (int j = 0; j < dim; ++j) {
                e(i, j) = 0.2 + rng.uniform();
                s += e(i, j);
            }
            for (int j = 0; j < dim; ++j) e(i, j) *= p[n] / z.value() / s;
        }
    }
    std::ostringstream src;
    src << "synthetic beta=" << beta << " terms=" << terms << " dim=" << dim << " seed=" << seed;
    return make_renewal_spec(std::move(R), beta, src.str());
}

RenewalSpec load_renewal_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        if (line.compare(first, 9, "generator") != 0) {
            in.clear();
            in.seekg(0);
            return renewal_spec_from_tower(read_tower(in));
        }
        std::map<std::string, std::string> kv;
        std::istringstream ss(line.substr(first + 9));
        std::string tok;
        while (ss >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos)
                throw ParseError("generator token '" + tok + "' is not key=value", line_no,
                                 static_cast<int>(line.find(tok)) + 1);
            kv[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
        auto get = [&](const std::string& key, double fallback, bool required) {
            auto it = kv.find(key);
            if (it == kv.end()) {
                if (required) throw ParseError("generator is missing '" + key + "'", line_no, 1);
                return fallback;
            }
            double v = 0;
            const auto& s = it->second;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size())
                throw ParseError("generator value for '" + key + "' is not a number", line_no,
                                 static_cast<int>(line.find(key + "=")) + 1);
            return v;
        };
        for (const auto& [key, value] : kv)
            if (key != "beta" && key != "terms" && key != "dim" && key != "seed")
                throw ParseError("unknown generator key '" + key + "'", line_no,
                                 static_cast<int>(line.find(key + "=")) + 1);
        return synthetic_renewal_spec(get("beta", 0, true), static_cast<long>(get("terms", 0, true)),
                                      static_cast<int>(get("dim", 1, false)),
                                      static_cast<std::uint64_t>(get("seed", 1, false)));
    }
    throw ParseError("empty renewal spec file", line_no, 0);
}

template <class Scalar>
BasicWeightedSeq<Scalar> renewal_solve(const BasicWeightedSeq<Scalar>& R, long n_out) {
    using Matrix = typename BasicWeightedSeq<Scalar>::Matrix;
    if (R.side() != Side::causal) throw InvalidInput("renewal_solve: R must be causal");
    if (n_out < 0) throw InvalidInput("renewal_solve: n_out must be >= 0");
    const int d = R.dim();
    BasicWeightedSeq<Scalar> T(0, n_out, d, R.gamma(), Side::causal);
    T.at(0).setIdentity();
    Matrix acc(d, d);
    for (long n = 1; n <= n_out; ++n) {
        const long k_hi = std::min(n, R.n_max());
        if (d == 1) {
            Scalar s{0};
            for (long k = 1; k <= k_hi; ++k) s += R.scalar(k) * T.scalar(n - k);
            T.scalar(n) = s;
            continue;
        }
        acc.setZero();
        for (long k = 1; k <= k_hi; ++k) acc.noalias() += R.at(k) * T.at(n - k);
        T.at(n) = acc;
    }
    return T;
}

template WeightedSeq renewal_solve(const WeightedSeq&, long);
template ComplexWeightedSeq renewal_solve(const ComplexWeightedSeq&, long);

WeightedSeq renewal_solve(const RenewalSpec& spec, long n_out) { return renewal_solve(spec.R, n_out); }

RenewalLimitReport verify_renewal_limit(const RenewalSpec& spec, long n_out, long fit_lo, long fit_hi) {
    if (n_out < 1) throw InvalidInput("verify_renewal_limit: n_out must be >= 1");
    const auto T = renewal_solve(spec, n_out);
    RenewalLimitReport rep;
    rep.fit_lo = fit_lo > 0 ? fit_lo : std::max(1L, n_out / 100);
    rep.fit_hi = fit_hi > 0 ? fit_hi : n_out;
    const Eigen::MatrixXd limit = spec.P / spec.mu;
    rep.error.resize(n_out + 1);
    for (long n = 0; n <= n_out; ++n) {
        rep.error[n] = entry_norm(T.at(n) - limit);
        if (rep.floor_reached_at < 0 && rep.error[n] < 1e-13) rep.floor_reached_at = n;
    }
    // Geometric sample of the window, so each decade weighs the same in the fit.
    std::vector<double> xs, ys;
    const long hi = std::min(rep.fit_hi, n_out);
    const double decades = std::log10(static_cast<double>(hi) / rep.fit_lo);
    const int samples = std::max(2, static_cast<int>(std::ceil(20.0 * decades)) + 1);
    long last = 0;
    for (int k = 0; k < samples; ++k) {
        const long n = std::lround(rep.fit_lo * std::pow(10.0, decades * k / (samples - 1)));
        if (n == last || n > hi || rep.error[n] <= 0) continue;
        last = n;
        xs.push_back(static_cast<double>(n));
        ys.push_back(rep.error[n]);
    }
    if (xs.size() >= 2) {
        rep.fit = fit_loglog(xs, ys);
        rep.exponent = -rep.fit.slope;
    }
    return rep;
}

PerturbedFamily scalar_twist_family(const RenewalSpec& spec, std::vector<double> c) {
    if (spec.R.dim() != 1) throw InvalidInput("scalar twist needs a scalar renewal spec");
    if (static_cast<long>(c.size()) <= spec.R.n_max())
        throw InvalidInput("scalar twist needs one phase coefficient per index 0..n_max");
    PerturbedFamily fam;
    fam.spec = spec;
    fam.description = "scalar twist";
    fam.at = [R = spec.R, c = std::move(c)](double t) {
        ComplexWeightedSeq out(0, R.n_max(), 1, R.gamma(), Side::causal);
        for (long n = 0; n <= R.n_max(); ++n) out.scalar(n) = R.scalar(n) * std::polar(1.0, t * c[n]);
        return out;
    };
    return fam;
}

PerturbedFamily centered_lattice_family(const RenewalSpec& spec) {
    std::vector<double> c(spec.R.n_max() + 1);
    for (long n = 0; n <= spec.R.n_max(); ++n) c[n] = static_cast<double>(n) - spec.mu;
    auto fam = scalar_twist_family(spec, std::move(c));
    fam.description = "centered lattice twist c_n = n - mu";
    return fam;
}

PerturbedFamily tower_family(const FiniteTower& tower, const TowerObservable& f) {
    PerturbedFamily fam;
    fam.spec = renewal_spec_from_tower(tower);
    fam.description = "finite tower twisted by " + f.name();
    const Eigen::VectorXd fb = tower.induced_values(f);
    fam.at = [tower, fb](double t) {
        const std::size_t c = tower.cell_count();
        ComplexWeightedSeq R(0, tower.max_return_time(), static_cast<int>(c), 3.0, Side::causal);
        for (std::size_t i = 0; i < c; ++i) {
            const auto& ci = tower.cell(i);
            const cplx phase = std::polar(1.0, t * fb(i));
            for (std::size_t j = 0; j < c; ++j)
                R.at(ci.return_time)(j, i) += ci.mass * ci.row[j] / tower.cell(j).mass * phase;
        }
        return R;
    };
    return fam;
}

namespace {

cplx leading_near(const ComplexWeightedSeq& R, cplx previous) {
    Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(R.dim(), R.dim());
    for (long n = 0; n <= R.n_max(); ++n) sum += R.at(n);
    if (R.dim() == 1) return sum(0, 0);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(sum, false);
    cplx best = es.eigenvalues()(0);
    for (int i = 1; i < es.eigenvalues().size(); ++i)
        if (std::abs(es.eigenvalues()(i) - previous) < std::abs(best - previous)) best = es.eigenvalues()(i);
    return best;
}

struct EnvelopeFit {
    double C = 0.0;
    double min_margin = 0.0;
    std::vector<std::vector<double>> lhs;
};

EnvelopeFit fit_envelope(const PerturbedFamily& fam, const std::vector<double>& ts,
                         const std::vector<cplx>& M, double d, long n_out) {
    const RenewalSpec& spec = fam.spec;
    const double p = spec.beta - 1.0;
    const Eigen::MatrixXcd P = spec.P.cast<cplx>();
    EnvelopeFit fit;
    fit.lhs.resize(ts.size());
    std::vector<std::vector<double>> env(ts.size());
    for (std::size_t it = 0; it < ts.size(); ++it) {
        const double t = ts[it];
        const auto T = renewal_solve(fam.at(t), n_out);
        const cplx ratio = 1.0 - M[it] / spec.mu;
        const double q = 1.0 - d * t * t;
        cplx power = 1.0;
        double conv = 0.0;  // sum_{k=1}^n k^-p q^(n-k)
        fit.lhs[it].resize(n_out);
        env[it].resize(n_out);
        for (long n = 1; n <= n_out; ++n) {
            power *= ratio;
            const double wn = std::pow(static_cast<double>(n), -p);
            conv = q * conv + wn;
            fit.lhs[it][n - 1] = entry_norm(T.at(n) - (power / spec.mu) * P);
            env[it][n - 1] = wn + std::abs(t) * conv;
        }
    }
    for (std::size_t it = 0; it < ts.size(); ++it)
        for (long n = 0; n < n_out; ++n) fit.C = std::max(fit.C, fit.lhs[it][n] / env[it][n]);
    fit.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < ts.size(); ++it)
        for (long n = 0; n < n_out; ++n)
            fit.min_margin = std::min(fit.min_margin, (fit.C - fit.lhs[it][n] / env[it][n]) * env[it][n]);
    return fit;
}

}  // namespace

PerturbedEnvelopeReport verify_perturbed_envelope(const PerturbedFamily& family,
                                                  std::vector<double> t_grid, long n_out) {
    if (t_grid.empty()) throw InvalidInput("verify_perturbed_envelope: empty t grid");
    if (n_out < 1) throw InvalidInput("verify_perturbed_envelope: n_out must be >= 1");
    std::sort(t_grid.begin(), t_grid.end());
    PerturbedEnvelopeReport rep;
    rep.t_grid = t_grid;
    rep.n_out = n_out;
    rep.lambda.resize(t_grid.size());
    rep.M.resize(t_grid.size());

    // Track the eigenvalue branch outward from t = 0 on both sides of the grid.
    const auto zero_it = std::lower_bound(t_grid.begin(), t_grid.end(), 0.0);
    const long start = zero_it - t_grid.begin();
    auto track = [&](long from, long to, long step) {
        cplx prev = 1.0;
        double prev_t = 0.0;
        for (long i = from; i != to; i += step) {
            const double t = t_grid[i];
            // Substeps keep the continuation on the branch when the grid is coarse.
            const int sub = std::max(1, static_cast<int>(std::ceil(std::abs(t - prev_t) / 0.01)));
            for (int s = 1; s <= sub; ++s) {
                const double ts = prev_t + (t - prev_t) * s / sub;
                const cplx next = leading_near(family.at(ts), prev);
                if (std::abs(next - prev) > 0.25) {
                    std::ostringstream msg;
                    msg << "eigenvalue tracking lost the branch near t = " << ts << " (jump from "
                        << prev << " to " << next << ")";
                    throw NumericalError(msg.str());
                }
                prev = next;
            }
            prev_t = t;
            rep.lambda[i] = prev;
            rep.M[i] = 1.0 - prev;
        }
    };
    track(start, static_cast<long>(t_grid.size()), 1);
    track(start - 1, -1, -1);

    const double t0 = 1e-4;
    const cplx lam0 = leading_near(family.at(t0), 1.0);
    rep.curvature = (1.0 - lam0) / (t0 * t0);
    const cplx half = (1.0 - leading_near(family.at(t0 / 2), 1.0)) / (t0 * t0 / 4);
    if (std::abs(half - rep.curvature) > 1e-2 * std::abs(rep.curvature))
        throw NumericalError("perturbed envelope: M(t)/t^2 does not settle as t -> 0; is the twist centered?");
    if (!(rep.curvature.real() > 0))
        throw NumericalError("perturbed envelope: M(t)/t^2 has non-positive real part");
    rep.d = rep.curvature.real() / (2.0 * family.spec.mu);
    double t_max = 0;
    for (double t : t_grid) t_max = std::max(t_max, std::abs(t));
    if (rep.d * t_max * t_max >= 1.0)
        throw InvalidInput("perturbed envelope: t grid exceeds 1/sqrt(d)");

    const auto fit = fit_envelope(family, t_grid, rep.M, rep.d, n_out);
    rep.C = fit.C;
    rep.min_margin = fit.min_margin;
    rep.lhs = fit.lhs;
    rep.C_doubled = fit_envelope(family, t_grid, rep.M, rep.d, 2 * n_out).C;
    return rep;
}

}  // namespace towerlimits
