#pragma once

// Spectral peak picking and small nonlinear least-squares fits for
// sinusoidal models.

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "modesep/signal.hpp"

namespace modesep::sinusoid {

/// Angular frequency of the largest bin of the mean-removed, zero-padded DFT
/// magnitude. Returns 0 when the peak sits at DC.
double spectral_peak(std::span<const double> signal, double dt, int zero_pad_factor = 8);

/// Residual model r(p) and Jacobian J(p) for Levenberg-Marquardt.
struct LeastSquaresProblem {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

struct LeastSquaresResult {
    Eigen::VectorXd params;
    double cost = 0.0;  // 0.5 * |r|^2
    int iterations = 0;
    bool converged = false;
};

LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem, Eigen::VectorXd start,
                                       int max_iterations = 200, double tol = 1e-15);

/// a*cos(w t + phi) + c, with a >= 0 and phi in [0, 2pi).
struct CosineFit {
    double amplitude = 0.0;
    double omega = 0.0;
    double phase = 0.0;
    double offset = 0.0;
    double rss = 0.0;
};

/// Linear least squares for (a, phi, c) at a fixed frequency.
CosineFit fit_cosine_fixed_frequency(std::span<const double> signal, const TimeGrid& grid, double omega);

/// Full nonlinear fit started from `omega_guess`: profile search over the
/// frequency followed by a joint Levenberg-Marquardt polish.
CosineFit fit_cosine(std::span<const double> signal, const TimeGrid& grid, double omega_guess);

double wrap_phase(double phase);

}  // namespace modesep::sinusoid
