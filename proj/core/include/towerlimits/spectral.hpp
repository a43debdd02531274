#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <string>
#include <vector>

#include "towerlimits/induced_operator.hpp"
#include "towerlimits/numerics.hpp"

namespace towerlimits {

struct EigenOptions {
    double gap = 0.05;          // required |lambda_1| - |lambda_2| when require_gap
    double tolerance = 1e-12;   // residual |R x - lambda x| / |x|
    int block = 4;              // subspace dimension
    int max_iterations = 5000;
    bool require_gap = true;
    bool compute_left = true;
    bool resolve_second = true;  // iterate until the second Ritz pair has converged as well
};

struct EigenResult {
    cplx lambda = 0.0;
    Eigen::VectorXcd right;  // normalized to unit mean against the masses
    Eigen::VectorXcd left;   // left^T R = lambda left^T, left^T right = 1
    double second_modulus = 0.0;  // a Ritz estimate only when resolve_second is off
    double residual = 0.0;
    int iterations = 0;
};

// Leading eigenvalue (largest modulus) by block subspace iteration with Rayleigh-Ritz.
EigenResult leading_eigen(const SparseOperator& R, const Eigen::VectorXd& masses, const EigenOptions& opts = {});
EigenResult leading_eigen(const UlamOperator& op, const EigenOptions& opts = {});

enum class PoissonMethod { automatic, neumann, direct };

struct PoissonResult {
    Eigen::VectorXd a;
    double residual = 0.0;  // max |(I - R) a - g|
    int terms = 0;          // Neumann terms used (0 for the direct solve)
    PoissonMethod method = PoissonMethod::automatic;
};

// Mean-zero solution of (I - R) a = g for a transfer matrix R with invariant masses, after
// projecting the mean of g out. Automatic picks the direct solve up to 1024 cells.
PoissonResult solve_poisson_transferred(const Eigen::SparseMatrix<double, Eigen::RowMajor>& R,
                                        const Eigen::VectorXd& masses, Eigen::VectorXd g,
                                        PoissonMethod method = PoissonMethod::automatic, double tolerance = 1e-13);
// a = (I - R)^{-1} R fB, with fB mean-zero against the masses.
PoissonResult solve_poisson(const Eigen::SparseMatrix<double, Eigen::RowMajor>& R, const Eigen::VectorXd& masses,
                            const Eigen::VectorXd& fB, PoissonMethod method = PoissonMethod::automatic);
PoissonResult solve_poisson(const UlamOperator& op0, const Eigen::VectorXd& fB,
                            PoissonMethod method = PoissonMethod::automatic);

struct CurvatureFit {
    double sigma2 = 0.0;
    double error = 0.0;                // spread of the last two Richardson diagonals
    bool converged = false;
    std::vector<double> extrapolants;  // Richardson diagonal, coarsest first
};

// Eigenvalue curve, Poisson solution and variance of one induced observable.
struct SpectralData {
    std::vector<double> t;
    std::vector<cplx> lambda;
    std::vector<double> second_modulus;
    std::vector<cplx> L;  // lambda = 1 - sigma2 / (2 m(B)) L
    double sigma2 = 0.0;     // from the second derivative of lambda at t = 0
    CurvatureFit curvature;  // independent estimate from the sampled curve
    double m_B = 0.0;
    Eigen::VectorXd masses;
    Eigen::VectorXd a;           // Poisson solution for T_B f_B
    Eigen::VectorXd f_average;   // cell averages of f_B
    double a_dot_f = 0.0;        // E_B(a f_B)
    double mean_induced = 0.0;   // E_B(f_B)
    double second_induced = 0.0; // E_B(f_B^2), including the within-piece variance
    double poisson_residual = 0.0;
};

// Geometric grid t0, t0 r, t0 r^2, ... (count points, r in (0, 1)).
std::vector<double> geometric_grid(double t0, double ratio, int count);

// Computes lambda(1, t) on t_grid (positive, geometric, decreasing), sigma2 from the derivative
// formula and, separately, the curvature fit. L is filled only when sigma2 > 0.
SpectralData spectral_data(const InducedTable& table, const std::vector<double>& t_grid,
                           const EigenOptions& opts = {});

// sigma2 = 2 m(B) lim (1 - Re lambda(t)) / t^2 by Richardson extrapolation in t^2. Heavy
// branch tails add |t|^p terms with non-integer p, so `converged` can legitimately fail.
CurvatureFit variance_from_curvature(const SpectralData& sd, double relative_tolerance = 1e-3);

// sigma2 = m(B) (E_B f_B^2 - (E_B f_B)^2 + 2 E_B(a f_B)) from the fields already in sd.
double variance_from_derivatives(const SpectralData& sd);

// |lambda(1, t) - [E_B(e^{it f_B}) - t^2 E_B(a f_B)]|.
double eigenvalue_expansion_residual(const InducedTable& table, const SpectralData& sd, double t,
                                     const EigenOptions& opts = {});

}  // namespace towerlimits
