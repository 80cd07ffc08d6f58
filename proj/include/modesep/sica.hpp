#pragma once

// Single-frequency ICA: extracted components are pulled toward the cumulant
// signature of a unit-variance cosine, log I0(sqrt(2) z), which does not
// depend on the (unknown) frequency. The statistics window is refined to an
// integer number of periods of each component by iteration.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "modesep/error.hpp"
#include "modesep/signal.hpp"

namespace modesep {

/// Evaluation points of the cumulant-matching loss.
class ZGrid {
public:
    ZGrid();  // 0.2, 0.4, ..., 2.0
    explicit ZGrid(std::vector<double> z_values);

    const std::vector<double>& values() const noexcept { return z_; }
    std::size_t size() const noexcept { return z_.size(); }

    bool operator==(const ZGrid&) const = default;

private:
    std::vector<double> z_;
};

struct SicaConfig {
    ZGrid z_grid;
    int periods_per_window = 2;
    int max_outer_iterations = 10;
    double freq_rel_tol = 1e-3;
    int newton_max_steps = 200;
    double newton_grad_tol = 1e-10;
    int restarts = 8;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Per-component failure carried inside a solution instead of aborting it.
struct ComponentStatus {
    bool ok = true;
    ErrorCode code = ErrorCode::InvalidArgument;
    std::string message;
};

/// State of one component after one outer iteration.
struct RoundRecord {
    Window window;
    Eigen::VectorXd direction;     // unit vector in the whitened frame of `window`
    Eigen::VectorXd unmixing_row;  // raw-space row: s = row . (x - means)
    Eigen::VectorXd means;
    std::vector<double> signal;    // unit-variance over `window`, full record length
    double frequency = 0.0;
    double phase = 0.0;
    double loss = 0.0;
};

struct ComponentResult {
    Eigen::VectorXd direction;
    Eigen::VectorXd unmixing_row;
    Eigen::VectorXd means;
    Window window;
    std::vector<double> signal;
    double frequency = 0.0;
    double phase = 0.0;
    double loss = 0.0;
    std::optional<double> negentropy;
    std::vector<double> frequency_history;
    std::vector<RoundRecord> rounds;
    ComponentStatus status;
};

struct UnmixingSolution {
    std::string method;
    std::vector<ComponentResult> components;
    // Whitening over the first (whole-record) window; round-1 directions of
    // every component live in this frame.
    WhitenedEnsemble whitening_used;
    SicaConfig config;
};

/// log I0(sqrt(2) z) by the modified-Bessel power series.
double reference_cgf(double z);

/// log I0(x) for x >= 0 (series; asymptotic expansion for very large x).
double log_bessel_i0(double x);

/// Sum over the z-grid of (K_emp(z) - reference_cgf(z))^2 over `window`.
double sica_loss(std::span<const double> signal, Window window, const ZGrid& z_grid);

struct LossDerivatives {
    double loss = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

/// Exact Euclidean gradient and Hessian of sica_loss(project(whitened, w))
/// with respect to w, evaluated at a unit-norm `direction`.
LossDerivatives loss_gradient_hessian(const WhitenedEnsemble& whitened,
                                      const Eigen::Ref<const Eigen::VectorXd>& direction, Window window,
                                      const ZGrid& z_grid);

/// Unit-sphere Newton minimization restricted to the orthogonal complement of
/// `orthogonal_to`, started from `start`.
struct NewtonOutcome {
    Eigen::VectorXd direction;
    double loss = 0.0;
    double gradient_norm = 0.0;
    int steps = 0;
    bool converged = false;
};

NewtonOutcome newton_minimize(const WhitenedEnsemble& whitened, Window window, const SicaConfig& config,
                              const std::vector<Eigen::VectorXd>& orthogonal_to, Eigen::VectorXd start);

/// Best of `config.restarts` seeded Newton runs. `stream` separates the
/// random starts of different callers (component index, outer iteration).
/// Throws NoConvergence when no restart converges.
ComponentResult extract_component(const WhitenedEnsemble& whitened, Window window, const SicaConfig& config,
                                  const std::vector<Eigen::VectorXd>& orthogonal_to, std::uint64_t stream = 0);

struct FrequencyEstimate {
    double omega = 0.0;
    double phase = 0.0;
};

/// Zero-padded DFT peak refined by a nonlinear fit of a*cos(w t + phi) + c.
/// Throws NoOscillation.
FrequencyEstimate estimate_frequency(std::span<const double> signal, const TimeGrid& grid);

/// The full iterative procedure. Per-component failures are reported in
/// ComponentResult::status.
UnmixingSolution sica_extract(const Ensemble& raw, std::size_t n_components, const SicaConfig& config);

/// Maps a raw-space unmixing row into the whitened frame of `whitened`
/// (unit-normalized): the direction producing the same signal up to scale.
Eigen::VectorXd row_to_direction(const WhitenedEnsemble& whitened, const Eigen::VectorXd& unmixing_row);

/// Orthonormal basis of the complement of span(vectors) in R^m.
Eigen::MatrixXd orthogonal_complement(const std::vector<Eigen::VectorXd>& vectors, std::size_t m);

}  // namespace modesep
