#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "towerlimits/finite_tower.hpp"
#include "towerlimits/numerics.hpp"
#include "towerlimits/seq_algebra.hpp"

namespace towerlimits {

// Renewal data: causal R_n (R_0 = 0) with R(1) = sum R_n having a simple eigenvalue 1,
// its rank-one spectral projection P and the drift mu (P R'(1) P = mu P).
struct RenewalSpec {
    WeightedSeq R{0, 1, 1, 2.0, Side::causal};
    double beta = 3.0;  // design tail exponent: sum_{k>n} ||R_k|| = O(n^-beta)
    double mu = 0.0;
    Eigen::MatrixXd P;
    std::string source;
};

// Fills in P and mu from R; rejects R_0 != 0, a missing or non-simple eigenvalue 1, mu <= 0.
RenewalSpec make_renewal_spec(WeightedSeq R, double beta, std::string source = {});

// Base first-return matrices of a finite tower: R_n u(j) = sum_{i: phi_i = n} m_i P_ij u_i / m_j.
RenewalSpec renewal_spec_from_tower(const FiniteTower& tower);

// R_n proportional to n^-(beta+1) for 1 <= n <= terms, normalized so that R(1) is stochastic.
// With dim > 1 each term is p_n K_n with seeded random row-stochastic K_n.
RenewalSpec synthetic_renewal_spec(double beta, long terms, int dim = 1, std::uint64_t seed = 1);

// Either a finite-tower file or a single line
//   generator beta=<b> terms=<N> [dim=<d>] [seed=<s>]
RenewalSpec load_renewal_spec(const std::filesystem::path& path);

// T_0 = I, T_n = sum_{k=1}^n R_k T_{n-k}: the coefficients of (I - R(z))^{-1}.
template <class Scalar>
BasicWeightedSeq<Scalar> renewal_solve(const BasicWeightedSeq<Scalar>& R, long n_out);
WeightedSeq renewal_solve(const RenewalSpec& spec, long n_out);

struct RenewalLimitReport {
    std::vector<double> error;  // ||T_n - P/mu|| for n = 0..n_out
    long fit_lo = 0, fit_hi = 0;
    LinearFit fit;               // log error against log n on [fit_lo, fit_hi]
    double exponent = 0.0;       // -fit.slope
    long floor_reached_at = -1;  // first n with error below 1e-13 (-1 if never)
};

// fit_lo/fit_hi = 0 select [n_out/100, n_out].
RenewalLimitReport verify_renewal_limit(const RenewalSpec& spec, long n_out, long fit_lo = 0,
                                        long fit_hi = 0);

// A family t -> R_n(t) with R_n(0) = R_n.
struct PerturbedFamily {
    RenewalSpec spec;
    std::function<ComplexWeightedSeq(double)> at;
    std::string description;
};

// R_n(t) = R_n e^{i t c_n} (scalar specs).
PerturbedFamily scalar_twist_family(const RenewalSpec& spec, std::vector<double> c);
// The lattice twist c_n = n - mu: the induced sum of the mean-zero observable 1 - mu 1_B.
PerturbedFamily centered_lattice_family(const RenewalSpec& spec);
// Base first-return matrices of a tower twisted by e^{i t f_B}.
PerturbedFamily tower_family(const FiniteTower& tower, const TowerObservable& f);

struct PerturbedEnvelopeReport {
    std::vector<double> t_grid;
    std::vector<cplx> lambda;        // leading eigenvalue of R(1, t), tracked from t = 0
    std::vector<cplx> M;             // 1 - lambda
    cplx curvature;                  // M(t)/t^2 as t -> 0
    double d = 0.0;                  // Re(curvature) / (2 mu)
    double C = 0.0;                  // smallest constant making the envelope hold on the grid
    double C_doubled = 0.0;          // same with 2 n_out
    double min_margin = 0.0;
    long n_out = 0;
    std::vector<std::vector<double>> lhs;  // [t index][n - 1], n = 1..n_out
    bool stable() const { return C > 0 && C_doubled <= 2.0 * C && C <= 2.0 * C_doubled; }
};

// LHS_n(t) = ||T_n(t) - (1/mu)(1 - M(t)/mu)^n P|| against
// n^-(beta-1) + |t| sum_{k=1}^n k^-(beta-1) (1 - d t^2)^(n-k).
PerturbedEnvelopeReport verify_perturbed_envelope(const PerturbedFamily& family,
                                                  std::vector<double> t_grid, long n_out);

}  // namespace towerlimits
