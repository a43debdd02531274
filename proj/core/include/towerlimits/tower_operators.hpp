#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "towerlimits/finite_tower.hpp"

namespace towerlimits {

// The first-return family of a finite tower as full state-space matrices, built from masked
// products of the twisted transfer matrix M = T(e^{itf} .) with P_B (base) and P_out (rest):
//   R_n = P_B (M P_out)^{n-1} M P_B          first return after exactly n steps
//   A_0 = P_B,  A_n = P_out (M P_out)^{n-1} M P_B   left the base, not back yet
//   B_n = P_B (M P_out)^n                     enter the base for the first time at step n
//   C_n = P_out (M P_out)^n                   never in the base at steps 0..n
//   T_n = P_B M^n P_B                         every path from base to base
struct TowerOperators {
    double t = 0.0;
    std::vector<Eigen::MatrixXcd> R, T, A, B, C;  // index 0..n
};

TowerOperators tower_operators(const FiniteTower& tower, const TowerObservable& f, double t, int n);

// T_n from the R_k through the renewal recursion T_n = sum_{k=1}^n R_k T_{n-k}, T_0 = P_B.
std::vector<Eigen::MatrixXcd> renewal_from_first_returns(const std::vector<Eigen::MatrixXcd>& R,
                                                         const Eigen::MatrixXcd& base_projection);

struct DecompositionResult {
    int n = 0;
    double t = 0.0;
    // ||M^n - C_n - sum_{a+k+b=n} A_a T_k B_b||_max with T_k from the renewal recursion.
    double residual = 0.0;
    // max_k<=n ||T_k(renewal) - P_B M^k P_B||_max
    double renewal_mismatch = 0.0;
};

DecompositionResult decompose_iterate(const FiniteTower& tower, const TowerObservable& f, double t,
                                      int n);

struct BoundaryReport {
    int panel_size = 0;
    double a_identity_error = 0.0;  // max |sum_a int A_a(1_B) v - int v|
    double b_identity_error = 0.0;  // max |sum_b int_B B_b u - int u|
    // max over n, t, u of ||C_n(t) u||_1 - mass_missing_base(n) ||u||_inf (<= 0 when the bound holds)
    double c_bound_excess = 0.0;
    bool ok(double tol = 1e-14) const {
        return a_identity_error <= tol && b_identity_error <= tol && c_bound_excess <= tol;
    }
};

// Checks the boundary identities on a panel of test functions: constants, base indicator,
// level counters and seeded random cellwise functions.
BoundaryReport boundary_identities(const FiniteTower& tower, std::uint64_t seed = 1,
                                   int random_functions = 8);

}  // namespace towerlimits
