#pragma once

#include <string>
#include <vector>

#include "towerlimits/induced_operator.hpp"
#include "towerlimits/spectral.hpp"

namespace towerlimits {

struct PeriodicityOptions {
    double tolerance = 0.0;  // |lambda - 1| detection threshold; 0 selects 10/K
    bool refine = true;      // golden-section refinement of arg z around the best grid point
    double refine_tolerance = 1e-7;
    EigenOptions eigen{.gap = 0.0, .tolerance = 1e-10, .block = 4, .max_iterations = 20000,
                       .require_gap = false, .compute_left = false, .resolve_second = false};
};

struct PeriodicityRow {
    double t = 0.0;
    cplx z = 1.0;        // maximizer of the spectral radius over the z grid (refined)
    cplx lambda = 0.0;   // leading eigenvalue there
    double radius = 0.0;
    bool detected = false;
};

struct PeriodicityReport {
    std::vector<PeriodicityRow> rows;  // one per t
    double tolerance = 0.0;
    // "R" (every t detected), "{0}" (only t = 0), "lattice" (multiples of lattice_step) or
    // "irregular".
    std::string group;
    double lattice_step = 0.0;
    double max_radius_off_zero = 0.0;  // largest radius among rows with t != 0
};

// Points e^{2 pi i k / count}, k = 0..count-1.
std::vector<cplx> unit_circle_grid(int count);

// Spectral radius of R(z, t) for each t over z_grid; a point is detected when the leading
// eigenvalue is within tolerance of 1.
PeriodicityReport periodicity_scan(const InducedTable& table, const std::vector<double>& t_grid,
                                   const std::vector<cplx>& z_grid, const PeriodicityOptions& opts = {});

}  // namespace towerlimits
