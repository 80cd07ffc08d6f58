#include "modesep/sinusoid.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "modesep/error.hpp"

namespace modesep::sinusoid {

double wrap_phase(double phase) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double p = std::fmod(phase, two_pi);
    if (p < 0.0) p += two_pi;
    if (p >= two_pi) p -= two_pi;
    return p;
}

double spectral_peak(std::span<const double> signal, double dt, int zero_pad_factor) {
    const std::size_t n = signal.size();
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "spectral peak needs at least two samples");
    double mean = 0.0;
    for (double v : signal) mean += v;
    mean /= static_cast<double>(n);

    const std::size_t nf = n * static_cast<std::size_t>(zero_pad_factor);
    std::size_t best_bin = 0;
    double best_power = 0.0;
    for (std::size_t k = 0; k <= nf / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(nf);
        const std::complex<double> step(std::cos(angle), std::sin(angle));
        std::complex<double> phasor(1.0, 0.0);
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            acc += (signal[t] - mean) * phasor;
            // renormalize now and then so the rotation does not drift
            phasor = (t % 64 == 63) ? std::polar(1.0, angle * static_cast<double>(t + 1)) : phasor * step;
        }
        const double power = std::norm(acc);
        if (power > best_power) {
            best_power = power;
            best_bin = k;
        }
    }
    return 2.0 * std::numbers::pi * static_cast<double>(best_bin) / (static_cast<double>(nf) * dt);
}

LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem, Eigen::VectorXd start,
                                       int max_iterations, double tol) {
    LeastSquaresResult out;
    out.params = std::move(start);
    Eigen::VectorXd r = problem.residual(out.params);
    out.cost = 0.5 * r.squaredNorm();
    if (!std::isfinite(out.cost)) return out;

    double lambda = 1e-3;
    for (int it = 0; it < max_iterations; ++it) {
        out.iterations = it + 1;
        const Eigen::MatrixXd jac = problem.jacobian(out.params);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;
        if (grad.lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, out.cost)) {
            out.converged = true;
            return out;
        }

        bool improved = false;
        while (lambda < 1e16) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-12);
            const Eigen::VectorXd step = a.ldlt().solve(-grad);
            const Eigen::VectorXd trial = out.params + step;
            const Eigen::VectorXd r_trial = problem.residual(trial);
            const double cost_trial = 0.5 * r_trial.squaredNorm();
            if (std::isfinite(cost_trial) && cost_trial <= out.cost) {
                const double reduction = out.cost - cost_trial;
                const bool tiny_step = step.norm() <= 1e-13 * (out.params.norm() + 1e-13);
                out.params = trial;
                r = r_trial;
                out.cost = cost_trial;
                lambda = std::max(lambda * 0.3, 1e-12);
                improved = true;
                if (tiny_step || reduction <= tol * out.cost) {
                    out.converged = true;
                    return out;
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            // no descent possible at machine precision: a stationary point
            out.converged = true;
            return out;
        }
    }
    return out;
}

CosineFit fit_cosine_fixed_frequency(std::span<const double> signal, const TimeGrid& grid, double omega) {
    const auto n = static_cast<Eigen::Index>(signal.size());
    Eigen::MatrixXd basis(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double t = grid.time(static_cast<std::size_t>(k));
        basis(k, 0) = std::cos(omega * t);
        basis(k, 1) = std::sin(omega * t);
        basis(k, 2) = 1.0;
        y(k) = signal[static_cast<std::size_t>(k)];
    }
    const Eigen::Vector3d coef = basis.colPivHouseholderQr().solve(y);
    CosineFit fit;
    fit.omega = omega;
    fit.amplitude = std::hypot(coef(0), coef(1));
    fit.phase = wrap_phase(std::atan2(-coef(1), coef(0)));
    fit.offset = coef(2);
    fit.rss = (basis * coef - y).squaredNorm();
    return fit;
}

CosineFit fit_cosine(std::span<const double> signal, const TimeGrid& grid, double omega_guess) {
    if (!(omega_guess > 0.0)) throw Error(ErrorCode::InvalidArgument, "frequency guess must be positive");
    const double bin = 2.0 * std::numbers::pi / grid.duration();

    // profile scan of the fixed-frequency residual around the guess
    const double lo = std::max(omega_guess - 2.0 * bin, 0.05 * omega_guess);
    const double hi = omega_guess + 2.0 * bin;
    constexpr int scan_points = 41;
    double best_omega = omega_guess;
    double best_rss = fit_cosine_fixed_frequency(signal, grid, omega_guess).rss;
    for (int i = 0; i < scan_points; ++i) {
        const double w = lo + (hi - lo) * i / (scan_points - 1);
        const double rss = fit_cosine_fixed_frequency(signal, grid, w).rss;
        if (rss < best_rss) {
            best_rss = rss;
            best_omega = w;
        }
    }

    // golden-section refinement on the bracketing scan cells
    const double cell = (hi - lo) / (scan_points - 1);
    double a = std::max(best_omega - cell, 1e-3 * omega_guess);
    double b = best_omega + cell;
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - ratio * (b - a);
    double d = a + ratio * (b - a);
    double fc = fit_cosine_fixed_frequency(signal, grid, c).rss;
    double fd = fit_cosine_fixed_frequency(signal, grid, d).rss;
    for (int i = 0; i < 80 && (b - a) > 1e-13 * b; ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = fit_cosine_fixed_frequency(signal, grid, c).rss;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = fit_cosine_fixed_frequency(signal, grid, d).rss;
        }
    }
    CosineFit start = fit_cosine_fixed_frequency(signal, grid, 0.5 * (a + b));

    const auto n = static_cast<Eigen::Index>(signal.size());
    LeastSquaresProblem problem;
    problem.residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double t = grid.time(static_cast<std::size_t>(k));
            r(k) = p(0) * std::cos(p(1) * t + p(2)) + p(3) - signal[static_cast<std::size_t>(k)];
        }
        return r;
    };
    problem.jacobian = [&](const Eigen::VectorXd& p) {
        Eigen::MatrixXd j(n, 4);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double t = grid.time(static_cast<std::size_t>(k));
            const double cs = std::cos(p(1) * t + p(2));
            const double sn = std::sin(p(1) * t + p(2));
            j(k, 0) = cs;
            j(k, 1) = -p(0) * t * sn;
            j(k, 2) = -p(0) * sn;
            j(k, 3) = 1.0;
        }
        return j;
    };
    const Eigen::Vector4d p0(start.amplitude, start.omega, start.phase, start.offset);
    const LeastSquaresResult polished = levenberg_marquardt(problem, p0);

    CosineFit fit = start;
    if (std::isfinite(polished.cost) && 2.0 * polished.cost <= start.rss && polished.params(1) > 0.0) {
        fit.amplitude = polished.params(0);
        fit.omega = polished.params(1);
        fit.phase = polished.params(2);
        fit.offset = polished.params(3);
        fit.rss = 2.0 * polished.cost;
        if (fit.amplitude < 0.0) {
            fit.amplitude = -fit.amplitude;
            fit.phase += std::numbers::pi;
        }
        fit.phase = wrap_phase(fit.phase);
    }
    return fit;
}

}  // namespace modesep::sinusoid
