#pragma once

// Synthetic benchmark: a 2D Thomas-Fermi condensate with dipole, quadrupole
// and breathing perturbations plus node-wise noise, clipped at zero and with
// the chemical potential re-solved every frame to conserve the atom number.

#include <array>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "modesep/signal.hpp"

namespace modesep::becsim {

struct TrapParams {
    double m = 1.0;
    double omega_perp = 1.0;
    double g = 10.0;
    double n_atoms = 1000.0;

    void validate() const;
    /// Unperturbed chemical potential, sqrt(N g m w^2 / pi).
    double mu0() const;
    /// Thomas-Fermi radius of the unperturbed cloud.
    double tf_radius() const;
};

enum class Mode { dipole = 0, quadrupole = 1, breathing = 2 };

struct ModeSpec {
    std::array<double, 3> amplitudes{0.2, 0.2, 0.2};
    std::array<double, 3> frequencies{1.0, std::numbers::sqrt2, 2.0};

    void validate() const;
};

struct NoiseSpec {
    double amplitude = 0.1;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// n x n nodes over [-L, L]^2; node (ix, iy) is stored at iy * n + ix.
class SpatialGrid {
public:
    SpatialGrid(double half_width, std::size_t n_points);

    /// L = 1.3 * TF radius, 101 x 101 nodes.
    static SpatialGrid default_for(const TrapParams& trap);

    double half_width() const noexcept { return half_width_; }
    std::size_t n_points() const noexcept { return n_; }
    std::size_t node_count() const noexcept { return n_ * n_; }
    double spacing() const noexcept { return 2.0 * half_width_ / static_cast<double>(n_ - 1); }
    double coord(std::size_t i) const noexcept { return -half_width_ + spacing() * static_cast<double>(i); }
    double cell_area() const noexcept { return spacing() * spacing(); }

    /// Index of the node nearest to (x, y). Throws PointOutsideGrid.
    std::size_t nearest_node(double x, double y) const;

private:
    double half_width_;
    std::size_t n_;
};

using Field = std::vector<double>;

/// Spatial shape of one mode, scaled to the central density: (mu0/g) times
/// x/R, (x^2 - y^2)/R^2 or (x^2 + y^2)/R^2 with R the TF radius.
Field mode_pattern(const TrapParams& trap, const SpatialGrid& grid, Mode mode);

/// Sum of f_i * pattern_i * cos(w_i t).
Field perturbation_at(const TrapParams& trap, const ModeSpec& modes, const SpatialGrid& grid, double t);

/// Independent uniform draws on [-a, a] per node, keyed by (seed, frame, node).
Field noise_field(const NoiseSpec& noise, const SpatialGrid& grid, std::uint64_t frame_index);

/// Atom number of max(0, (mu - V)/g + extra) with `extra` constant over each
/// cell; the trap part is integrated exactly cell by cell.
double atom_number(const TrapParams& trap, double mu, const Field& extra, const SpatialGrid& grid);

/// Chemical potential giving n_atoms within 1e-6 relative. Throws
/// BracketingFailed.
double solve_chemical_potential(const TrapParams& trap, const Field& perturbation, const Field& noise_frame,
                                const SpatialGrid& grid);

/// Clipped density at the nodes for a given chemical potential.
Field density_at(const TrapParams& trap, double mu, const Field& extra, const SpatialGrid& grid);

/// Midpoint-rule integral: sum of node values times cell area.
double integrate(const Field& frame, const SpatialGrid& grid);

struct RenderedFrame {
    Field density;
    double mu = 0.0;
};

RenderedFrame render_frame(const TrapParams& trap, const ModeSpec& modes, const NoiseSpec& noise,
                           const SpatialGrid& grid, double t, std::uint64_t frame_index);

struct DensityMovie {
    SpatialGrid spatial_grid;
    TimeGrid time_grid;
    std::vector<Field> frames;
    std::vector<double> mu;
    TrapParams trap;
    ModeSpec modes;
    NoiseSpec noise;
};

DensityMovie generate_movie(const TrapParams& trap, const ModeSpec& modes, const NoiseSpec& noise,
                            const SpatialGrid& grid, const TimeGrid& time_grid);

/// The default record: 600 frames, dt = pi/100 (three dipole periods).
TimeGrid default_time_grid();

/// Three points at 0.3, 0.5, 0.7 TF radii, angles 0.3, 1.4, 2.6 rad.
std::vector<std::pair<double, double>> default_detectors(const TrapParams& trap);

/// One channel per point (nearest node). Throws PointOutsideGrid.
Ensemble sample_detectors(const DensityMovie& movie, const std::vector<std::pair<double, double>>& points);

/// Directory layout: meta.json, frames/frame_NNNNN.bin (little-endian f64,
/// row-major), detectors.csv when points are given.
void save_movie(const DensityMovie& movie, const std::string& directory,
                const std::vector<std::pair<double, double>>& detector_points);
DensityMovie load_movie(const std::string& directory);

/// Raw little-endian float64 arrays.
void write_f64(const std::string& path, const std::vector<double>& values);
std::vector<double> read_f64(const std::string& path, std::size_t expected_count);

}  // namespace modesep::becsim
