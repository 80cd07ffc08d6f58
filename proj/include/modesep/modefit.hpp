#pragma once

// Per-point harmonic fit of a density movie with known frequencies:
// n(r, t) = C0(r) + sum_i Ci(r) cos(w_i t).

#include <array>
#include <string>
#include <vector>

#include "modesep/becsim.hpp"

namespace modesep::modefit {

struct ModeMap {
    becsim::SpatialGrid spatial_grid;
    std::vector<double> c0;
    std::array<std::vector<double>, 3> c;
    std::array<double, 3> frequencies{};
    std::vector<double> residual_rms;
    // more than 20% of the frames exactly zero
    std::vector<bool> clipped;
    // sine coefficients, only filled when the fit included them
    std::array<std::vector<double>, 3> s;
    bool include_sine = false;
    double condition_number = 0.0;
};

/// Ordinary least squares per node. Throws IllConditionedBasis when the
/// normal matrix has condition number above 1e8.
ModeMap fit_amplitudes(const becsim::DensityMovie& movie, const std::array<double, 3>& frequencies,
                       bool include_sine = false);

/// The ideal pattern: x, x^2 - y^2, or r^2 - mean(r^2) inside `radius` (zero
/// outside).
std::vector<double> ideal_pattern(becsim::Mode mode, const becsim::SpatialGrid& grid, double radius);

/// Normalized inner product with the ideal pattern over nodes inside
/// `radius`, skipping nodes flagged in `excluded` (may be empty).
double mode_symmetry_score(const std::vector<double>& map, becsim::Mode mode, const becsim::SpatialGrid& grid,
                           double radius, const std::vector<bool>& excluded = {});

/// modemap.json, c0.bin .. c3.bin, residual_rms.bin, and modemap.csv when
/// `with_csv` is set.
void save_modemap(const ModeMap& map, const std::string& directory, bool with_csv = true);
ModeMap load_modemap(const std::string& directory);

}  // namespace modesep::modefit
