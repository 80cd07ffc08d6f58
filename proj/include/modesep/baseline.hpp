#pragma once

// Reference methods: deflation FastICA with a negentropy contrast, and a
// single damped-cosine fit of one channel.

#include <cstdint>
#include <span>
#include <string_view>

#include "modesep/signal.hpp"
#include "modesep/sica.hpp"

namespace modesep::baseline {

enum class Contrast { log_cosh, quartic };

std::string_view to_string(Contrast c);
Contrast contrast_from_string(std::string_view name);

struct NegentropyConfig {
    Contrast contrast = Contrast::log_cosh;
    int max_iterations = 500;
    double tol = 1e-8;
    int restarts = 8;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// E[G(nu)] for a standard normal nu.
double gaussian_contrast_mean(Contrast c);

/// (E[G(s)] - E[G(nu)])^2 over the window.
double negentropy(std::span<const double> signal, Window window, Contrast c);

/// Whitens over `window`, then one-unit fixed-point iterations with
/// deflation. Components are sorted by frequency like sica_extract's output;
/// a component whose restarts all fail carries NoConvergence in its status.
UnmixingSolution negentropy_extract(const Ensemble& raw, std::size_t n_components, const NegentropyConfig& config,
                                    Window window);

struct DampedFit {
    double amplitude = 0.0;
    double omega = 0.0;
    double gamma = 0.0;
    double phase = 0.0;
    double offset = 0.0;
    double residual_rms = 0.0;
};

/// a * exp(-gamma t) cos(omega t + phase) + c by Levenberg-Marquardt, with t
/// the grid times. A negative fitted gamma falls back to the undamped fit.
/// Throws FitDiverged.
DampedFit damped_cosine_fit(std::span<const double> signal, const TimeGrid& grid);

}  // namespace modesep::baseline
