#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <vector>

#include "towerlimits/lsv.hpp"
#include "towerlimits/numerics.hpp"
#include "towerlimits/observable.hpp"

namespace towerlimits {

struct InducedOptions {
    int cells = 4096;            // K, a power of two >= 64
    int n_max = 400;             // last branch enumerated individually
    int quadrature_points = 8;   // Gauss points per (cell, branch) piece
    double tail_threshold = 1e-6;  // largest admissible fraction of B beyond n_max
    int tail_depth = 100000;       // deepest branch with its own induced-observable mean
    int deep_points = 16;          // Gauss points over B for the deep branch means
    int threads = 1;
};

// One piece of the induced partition: the part of source cell `source` on branch `branch`
// that lands in target cell `target`. Length is Lebesgue; f_mean and f_var are the
// quadrature mean and variance of the induced observable on the piece.
struct InducedPiece {
    int target = 0;
    int source = 0;
    int branch = 0;
    int slot = 0;  // position of (target, source) in the sparse pattern
    double length = 0.0;
    double f_mean = 0.0;
    double f_var = 0.0;
};

using SparseOperator = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

// Ulam discretization of R(z, t) u = T_B(z^phi e^{it f_B} u) on K equal cells of B = (1/2, 1],
// written as the dual of composition with respect to the discrete invariant masses, so that at
// t = 0, z = 1 it fixes constants.
struct UlamOperator {
    int cells = 0;
    double t = 0.0;
    cplx z = 1.0;
    SparseOperator matrix;
    Eigen::VectorXd masses;  // discrete invariant probability on B (sums to 1)
    double tail_mass = 0.0;  // fraction of B carried by the lumped branches

    Eigen::VectorXcd apply(const Eigen::VectorXcd& u) const { return matrix * u; }
    // Mass-weighted integral sum_j masses_j u_j.
    cplx expectation(const Eigen::VectorXcd& u) const;
    // max_i |(R 1)_i - 1|.
    double constants_residual() const;
};

// Branch-resolved data of the induced map for one observable, built once and reused for
// every (z, t). Immutable after construction.
class InducedTable {
public:
    InducedTable(const LsvSystem& sys, const TowerObservable& f, const InducedOptions& opts = {});

    int cells() const { return opts_.cells; }
    int n_max() const { return opts_.n_max; }
    double alpha() const { return alpha_; }
    double cell_width() const { return 0.5 / opts_.cells; }
    const InducedOptions& options() const { return opts_; }
    const std::vector<InducedPiece>& pieces() const { return pieces_; }
    // Fraction of B on branches beyond n_max (modelled with the profile of branch n_max + 1).
    double tail_mass() const { return tail_mass_; }
    // Fraction of B beyond tail_depth.
    double remainder_mass() const { return remainder_mass_; }
    // Largest relative defect of sum(piece lengths) over a source cell (must stay below 1e-9).
    double conservation_error() const { return conservation_error_; }
    // m(B) = 1 / E_B(phi) from the discrete induced masses (Kac).
    double base_mass() const { return base_mass_; }
    double return_time_mean() const { return return_mean_; }
    // m(B) from the system's own density approximation, kept as a cross-check.
    double density_base_mass() const { return density_base_mass_; }
    // Integral of f against the invariant probability, m(B) E_B(f_B).
    double invariant_mean() const { return base_mass_ * induced_mean(); }
    const Eigen::VectorXd& masses() const { return masses_; }
    double stationary_residual() const { return stationary_residual_; }

    UlamOperator at(double t, cplx z = 1.0) const;
    // E_B(z^phi e^{it f_B}) with respect to the discrete invariant masses.
    cplx base_expectation(double t, cplx z = 1.0) const;
    // Mass-weighted average of f_B over each cell.
    Eigen::VectorXd induced_average() const;
    // T_B applied to f_B, i.e. (d/dt) R(1, t) 1 / i at t = 0.
    Eigen::VectorXd transferred_induced() const;
    // E_B(f_B) and E_B(f_B^2).
    double induced_mean() const;
    double induced_second_moment() const;

private:
    struct PieceMoments {
        double weight;  // Lebesgue length, including the deep branches for profile pieces
        double mean;
        double second;
    };
    void build_deep_branches(const TowerObservable& f);
    PieceMoments moments_of(const InducedPiece& pc) const;
    cplx deep_phase(double t, cplx z) const;
    cplx piece_phase(const InducedPiece& pc, double t, double rz, double az, cplx deep) const;

    double alpha_;
    InducedOptions opts_;
    std::vector<InducedPiece> pieces_;
    SparseOperator pattern_;
    Eigen::VectorXd masses_;
    double tail_mass_ = 0.0;
    double remainder_mass_ = 0.0;
    std::vector<double> deep_weight_;  // relative to the profile branch
    std::vector<double> deep_mean_;
    double deep_phi_[3] = {0.0, 0.0, 0.0};
    double profile_mean_ = 0.0;
    double conservation_error_ = 0.0;
    double base_mass_ = 0.0;
    double density_base_mass_ = 0.0;
    double return_mean_ = 0.0;
    double deep_return_ = 0.0;  // sum of relative weight * n over the deep branches
    double stationary_residual_ = 0.0;
};

// Smallest n >= 2 with x_n <= tail, i.e. an n_max that passes the tail threshold.
int branches_for_tail(double alpha, double tail);

UlamOperator build_induced_operator(const LsvSystem& sys, const TowerObservable& f, int cells, double t);

}  // namespace towerlimits
