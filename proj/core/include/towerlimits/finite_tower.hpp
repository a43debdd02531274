#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "towerlimits/observable.hpp"

namespace towerlimits {

struct TowerCell {
    double mass = 1.0;           // base mass (any positive scale before normalization)
    int return_time = 1;         // phi_i >= 1
    std::vector<double> row;     // P_ij: probability that the top of column i lands in base cell j
};

// Exact finite-state Young tower. States are (cell, level) pairs with 0 <= level < phi_i; the
// invariant measure gives every level of column i the base mass m_i, normalized so that
// sum_i m_i phi_i = 1. Immutable after construction.
class FiniteTower {
public:
    // Validates (positive masses, stochastic and mass-preserving rows, irreducible base chain,
    // gcd of return times = 1) and applies the Kac normalization.
    static FiniteTower build(std::vector<TowerCell> cells);

    std::size_t cell_count() const { return cells_.size(); }
    const TowerCell& cell(std::size_t i) const { return cells_.at(i); }
    const std::vector<TowerCell>& cells() const { return cells_; }
    int return_time(std::size_t i) const { return cells_.at(i).return_time; }
    int max_return_time() const;
    int return_time_gcd() const;

    int state_count() const { return static_cast<int>(cell_of_.size()); }
    int state_index(std::size_t cell, int level) const;
    int cell_of(int state) const { return cell_of_.at(state); }
    int level_of(int state) const { return level_of_.at(state); }
    bool in_base(int state) const { return level_of_.at(state) == 0; }

    Eigen::VectorXd state_mass() const;
    double base_mass() const;
    double total_mass() const;
    // Mass of the set of states that miss the base for the next n+1 time steps, i.e. levels
    // 1 <= level <= phi_i - n - 1 (zero when every column is shorter than n+2).
    double mass_missing_base(int n) const;

    // Row-stochastic state transition matrix Q(s, s').
    Eigen::MatrixXd markov_matrix() const;
    // Transfer operator w.r.t. the invariant measure: (T u)(s') = sum_s mu(s) Q(s,s') u(s) / mu(s').
    Eigen::MatrixXd transfer_matrix() const;
    // T(e^{itf} .) as a matrix.
    Eigen::MatrixXcd twisted_transfer(const TowerObservable& f, double t) const;

    // Induced transfer operator on the base cells: (R u)(j) = sum_i m_i P_ij u_i / m_j.
    Eigen::MatrixXd base_transfer() const;
    // Base-cell masses normalized to a probability (E_B weights).
    Eigen::VectorXd base_weights() const;

    // f as a vector over states; f must be cellwise with matching shape.
    Eigen::VectorXd state_values(const TowerObservable& f) const;
    // f_B per base cell: sum of f over the levels of the column.
    Eigen::VectorXd induced_values(const TowerObservable& f) const;
    double integrate(const TowerObservable& f) const;
    TowerObservable centered(const TowerObservable& f) const;

    // Observables stored with the tower file ("obs" lines).
    const std::map<std::string, TowerObservable>& observables() const { return observables_; }
    const TowerObservable& observable(const std::string& name) const;
    FiniteTower with_observable(TowerObservable f) const;

private:
    std::vector<TowerCell> cells_;
    std::vector<int> cell_of_, level_of_;
    std::vector<int> first_state_;
    std::map<std::string, TowerObservable> observables_;
};

// Text format ('#' starts a comment):
//   cells <c>
//   <mass> <phi> <P_i0> ... <P_i,c-1>        (c lines)
//   obs <name> <cell> <v_0> ... <v_{phi-1}>  (optional, one line per cell)
FiniteTower read_tower(std::istream& in);
FiniteTower load_tower(const std::filesystem::path& path);
void write_tower(std::ostream& out, const FiniteTower& tower);

}  // namespace towerlimits
