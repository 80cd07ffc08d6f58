#include "modesep/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "modesep/error.hpp"
#include "modesep/sinusoid.hpp"

namespace modesep::baseline {

namespace {

// E[log cosh(nu)], nu ~ N(0, 1)
constexpr double kLogCoshGaussianMean = 0.37456720749143797;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double log_cosh(double u) {
    const double a = std::abs(u);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

double contrast_value(Contrast c, double u) {
    return c == Contrast::log_cosh ? log_cosh(u) : 0.25 * u * u * u * u;
}

}  // namespace

std::string_view to_string(Contrast c) { return c == Contrast::log_cosh ? "log_cosh" : "quartic"; }

Contrast contrast_from_string(std::string_view name) {
    if (name == "log_cosh") return Contrast::log_cosh;
    if (name == "quartic") return Contrast::quartic;
    throw Error(ErrorCode::InvalidArgument, "unknown contrast '" + std::string(name) + "'");
}

void NegentropyConfig::validate() const {
    if (max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
    if (restarts < 1) throw Error(ErrorCode::InvalidArgument, "restarts must be >= 1");
}

double gaussian_contrast_mean(Contrast c) { return c == Contrast::log_cosh ? kLogCoshGaussianMean : 0.75; }

double negentropy(std::span<const double> signal, Window window, Contrast c) {
    if (window.empty()) throw Error(ErrorCode::EmptyWindow, "statistics window is empty");
    if (window.end > signal.size()) throw Error(ErrorCode::InvalidArgument, "window extends past the signal");
    double mean = 0.0;
    for (std::size_t k = window.begin; k < window.end; ++k) mean += contrast_value(c, signal[k]);
    mean /= static_cast<double>(window.size());
    const double d = mean - gaussian_contrast_mean(c);
    return d * d;
}

UnmixingSolution negentropy_extract(const Ensemble& raw, std::size_t n_components, const NegentropyConfig& config,
                                    Window window) {
    config.validate();
    const std::size_t m = raw.channel_count();
    if (n_components < 1 || n_components > m) {
        throw Error(ErrorCode::InvalidArgument, "n_components must be between 1 and the channel count");
    }
    UnmixingSolution solution{"ica", {}, whiten(raw, window), SicaConfig{}};
    const WhitenedEnsemble& white = solution.whitening_used;
    const auto x = white.channels.middleRows(static_cast<Eigen::Index>(window.begin),
                                             static_cast<Eigen::Index>(window.size()));
    const double n = static_cast<double>(window.size());
    const auto dim = static_cast<Eigen::Index>(m);

    std::vector<Eigen::VectorXd> taken;
    for (std::size_t i = 0; i < n_components; ++i) {
        ComponentResult comp;
        std::optional<Eigen::VectorXd> best;
        double best_j = -1.0;
        for (int restart = 0; restart < config.restarts; ++restart) {
            std::mt19937_64 rng(splitmix(splitmix(config.rng_seed ^ splitmix(i)) + static_cast<std::uint64_t>(restart)));
            std::normal_distribution<double> normal;
            Eigen::VectorXd w(dim);
            for (Eigen::Index k = 0; k < dim; ++k) w(k) = normal(rng);
            for (const auto& d : taken) w -= d.dot(w) * d;
            if (w.norm() < 1e-12) continue;
            w.normalize();

            bool converged = false;
            for (int it = 0; it < config.max_iterations; ++it) {
                const Eigen::VectorXd s = x * w;
                Eigen::VectorXd g(s.size());
                double dg = 0.0;
                for (Eigen::Index t = 0; t < s.size(); ++t) {
                    if (config.contrast == Contrast::log_cosh) {
                        const double th = std::tanh(s(t));
                        g(t) = th;
                        dg += 1.0 - th * th;
                    } else {
                        g(t) = s(t) * s(t) * s(t);
                        dg += 3.0 * s(t) * s(t);
                    }
                }
                Eigen::VectorXd next = x.transpose() * g / n - (dg / n) * w;
                for (int pass = 0; pass < 2; ++pass) {
                    for (const auto& d : taken) next -= d.dot(next) * d;
                }
                if (!(next.norm() > 1e-300) || !next.allFinite()) break;
                next.normalize();
                const double change = 1.0 - std::abs(next.dot(w));
                w = next;
                if (change < config.tol) {
                    converged = true;
                    break;
                }
            }
            if (!converged) continue;
            const Eigen::VectorXd s = x * w;
            const double j = negentropy(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                                        Window{0, window.size()}, config.contrast);
            if (j > best_j) {
                best_j = j;
                best = w;
            }
        }
        if (!best) {
            comp.status = {false, ErrorCode::NoConvergence, "no fixed-point restart converged"};
            solution.components.push_back(std::move(comp));
            continue;
        }
        comp.direction = *best;
        comp.signal = project(white, comp.direction);
        if (comp.signal.front() < 0.0) {
            comp.direction = -comp.direction;
            for (double& v : comp.signal) v = -v;
        }
        taken.push_back(comp.direction);
        comp.unmixing_row = white.whitening_matrix.transpose() * comp.direction;
        comp.means = white.means;
        comp.window = window;
        comp.loss = sica_loss(comp.signal, window, solution.config.z_grid);
        comp.negentropy = best_j;
        try {
            const FrequencyEstimate f = estimate_frequency(comp.signal, raw.grid());
            comp.frequency = f.omega;
            comp.phase = f.phase;
            comp.frequency_history.push_back(f.omega);
            comp.rounds.push_back({window, comp.direction, comp.unmixing_row, comp.means, comp.signal, f.omega,
                                   f.phase, comp.loss});
        } catch (const Error& e) {
            comp.status = {false, e.code(), e.what()};
        }
        solution.components.push_back(std::move(comp));
    }
    std::stable_sort(solution.components.begin(), solution.components.end(),
                     [](const ComponentResult& a, const ComponentResult& b) {
                         if (a.status.ok != b.status.ok) return a.status.ok;
                         return a.frequency < b.frequency;
                     });
    return solution;
}

DampedFit damped_cosine_fit(std::span<const double> signal, const TimeGrid& grid) {
    if (signal.size() < 16) throw Error(ErrorCode::InvalidArgument, "damped fit needs >= 16 samples");
    if (signal.size() != grid.size()) throw Error(ErrorCode::DimensionMismatch, "signal length differs from grid");

    const double peak = sinusoid::spectral_peak(signal, grid.dt(), 8);
    if (!(peak > 0.0)) throw Error(ErrorCode::FitDiverged, "no oscillation to fit (spectral peak at DC)");
    const sinusoid::CosineFit undamped = sinusoid::fit_cosine(signal, grid, peak);

    const auto n = static_cast<Eigen::Index>(signal.size());
    sinusoid::LeastSquaresProblem problem;
    problem.residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double t = grid.time(static_cast<std::size_t>(k));
            r(k) = p(0) * std::exp(-p(2) * t) * std::cos(p(1) * t + p(3)) + p(4) - signal[static_cast<std::size_t>(k)];
        }
        return r;
    };
    problem.jacobian = [&](const Eigen::VectorXd& p) {
        Eigen::MatrixXd j(n, 5);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double t = grid.time(static_cast<std::size_t>(k));
            const double e = std::exp(-p(2) * t);
            const double cs = std::cos(p(1) * t + p(3));
            const double sn = std::sin(p(1) * t + p(3));
            j(k, 0) = e * cs;
            j(k, 1) = -p(0) * e * t * sn;
            j(k, 2) = -p(0) * t * e * cs;
            j(k, 3) = -p(0) * e * sn;
            j(k, 4) = 1.0;
        }
        return j;
    };
    Eigen::VectorXd start(5);
    start << undamped.amplitude, undamped.omega, 0.0, undamped.phase, undamped.offset;
    const sinusoid::LeastSquaresResult res = sinusoid::levenberg_marquardt(problem, start, 500);
    if (!std::isfinite(res.cost) || !res.params.allFinite() || !res.converged) {
        throw Error(ErrorCode::FitDiverged, "damped cosine fit did not converge");
    }

    DampedFit fit;
    if (res.params(2) < 0.0 || !(res.params(1) > 0.0)) {
        fit.amplitude = undamped.amplitude;
        fit.omega = undamped.omega;
        fit.gamma = 0.0;
        fit.phase = undamped.phase;
        fit.offset = undamped.offset;
        fit.residual_rms = std::sqrt(undamped.rss / static_cast<double>(n));
        return fit;
    }
    fit.amplitude = res.params(0);
    fit.omega = res.params(1);
    fit.gamma = res.params(2);
    fit.phase = res.params(3);
    fit.offset = res.params(4);
    if (fit.amplitude < 0.0) {
        fit.amplitude = -fit.amplitude;
        fit.phase += std::numbers::pi;
    }
    fit.phase = sinusoid::wrap_phase(fit.phase);
    fit.residual_rms = std::sqrt(2.0 * res.cost / static_cast<double>(n));
    return fit;
}

}  // namespace modesep::baseline
