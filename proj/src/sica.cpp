#include "modesep/sica.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "modesep/sinusoid.hpp"

namespace modesep {

namespace {

std::vector<double> default_z_values() {
    std::vector<double> z;
    for (int i = 1; i <= 10; ++i) z.push_back(0.2 * i);
    return z;
}

// splitmix64 finalizer, used to derive independent seeds
std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Eigen::VectorXd random_unit(std::mt19937_64& rng, std::size_t m) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(static_cast<Eigen::Index>(m));
    do {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    } while (v.norm() < 1e-8);
    return v.normalized();
}

}  // namespace

ZGrid::ZGrid() : z_(default_z_values()) {}

ZGrid::ZGrid(std::vector<double> z_values) : z_(std::move(z_values)) {
    if (z_.size() < 2) throw Error(ErrorCode::InvalidArgument, "z-grid needs at least two points");
    for (std::size_t i = 0; i < z_.size(); ++i) {
        if (!std::isfinite(z_[i]) || !(z_[i] > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "z-grid values must be finite and positive");
        }
        if (i > 0 && !(z_[i] > z_[i - 1])) {
            throw Error(ErrorCode::InvalidArgument, "z-grid must be strictly increasing");
        }
    }
}

void SicaConfig::validate() const {
    if (periods_per_window < 1) throw Error(ErrorCode::InvalidArgument, "periods_per_window must be >= 1");
    if (max_outer_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_outer_iterations must be >= 1");
    if (!(freq_rel_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "freq_rel_tol must be positive");
    if (newton_max_steps < 1) throw Error(ErrorCode::InvalidArgument, "newton_max_steps must be >= 1");
    if (!(newton_grad_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "newton_grad_tol must be positive");
    if (restarts < 1) throw Error(ErrorCode::InvalidArgument, "restarts must be >= 1");
}

double log_bessel_i0(double x) {
    x = std::abs(x);
    if (x > 500.0) {
        // Hankel asymptotic series, far past where it is accurate to rounding
        const double inv8x = 1.0 / (8.0 * x);
        double term = 1.0;
        double sum = 1.0;
        for (int k = 1; k < 12; ++k) {
            const double odd = 2.0 * k - 1.0;
            term *= odd * odd * inv8x / k;
            sum += term;
        }
        return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
    }
    const double q = 0.25 * x * x;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 2000; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k));
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return std::log(sum);
}

double reference_cgf(double z) {
    if (!std::isfinite(z)) throw Error(ErrorCode::InvalidArgument, "z must be finite");
    return log_bessel_i0(std::numbers::sqrt2 * z);
}

double sica_loss(std::span<const double> signal, Window window, const ZGrid& z_grid) {
    double loss = 0.0;
    for (double z : z_grid.values()) {
        const double d = empirical_cgf_at(signal, window, z) - reference_cgf(z);
        loss += d * d;
    }
    return loss;
}

LossDerivatives loss_gradient_hessian(const WhitenedEnsemble& whitened,
                                      const Eigen::Ref<const Eigen::VectorXd>& direction, Window window,
                                      const ZGrid& z_grid) {
    const auto m = static_cast<Eigen::Index>(whitened.channel_count());
    if (direction.size() != m) {
        throw Error(ErrorCode::DimensionMismatch, "direction length differs from the channel count");
    }
    if (std::abs(direction.norm() - 1.0) > 1e-8) {
        throw Error(ErrorCode::InvalidArgument, "direction must be unit-norm");
    }
    if (window.empty()) throw Error(ErrorCode::EmptyWindow, "statistics window is empty");
    if (window.end > static_cast<std::size_t>(whitened.channels.rows())) {
        throw Error(ErrorCode::InvalidArgument, "statistics window extends past the record");
    }

    const auto x = whitened.channels.middleRows(static_cast<Eigen::Index>(window.begin),
                                                static_cast<Eigen::Index>(window.size()));
    const Eigen::VectorXd s = x * direction;
    const double n = static_cast<double>(window.size());

    LossDerivatives out;
    out.gradient = Eigen::VectorXd::Zero(m);
    out.hessian = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd weights(s.size());
    for (double z : z_grid.values()) {
        const double shift = (z * s).maxCoeff();
        for (Eigen::Index t = 0; t < s.size(); ++t) weights(t) = std::exp(z * s(t) - shift);
        const double total = weights.sum();
        const double k_emp = shift + std::log(total / n);
        const double dev = k_emp - reference_cgf(z);

        weights /= total;
        const Eigen::VectorXd mean_x = x.transpose() * weights;
        const Eigen::MatrixXd second = x.transpose() * weights.asDiagonal() * x;
        const Eigen::VectorXd dk = z * mean_x;
        const Eigen::MatrixXd d2k = z * z * (second - mean_x * mean_x.transpose());

        out.loss += dev * dev;
        out.gradient += 2.0 * dev * dk;
        out.hessian += 2.0 * (dk * dk.transpose() + dev * d2k);
    }
    return out;
}

Eigen::MatrixXd orthogonal_complement(const std::vector<Eigen::VectorXd>& vectors, std::size_t m) {
    const auto dim = static_cast<Eigen::Index>(m);
    // Gram-Schmidt of the constraint set, then of the canonical basis against it
    std::vector<Eigen::VectorXd> basis;
    for (const auto& v : vectors) {
        if (v.size() != dim) throw Error(ErrorCode::DimensionMismatch, "constraint vector has wrong length");
        Eigen::VectorXd u = v;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) u -= b.dot(u) * b;
        }
        if (u.norm() > 1e-10) basis.push_back(u.normalized());
    }
    const std::size_t constrained = basis.size();
    for (Eigen::Index i = 0; i < dim && basis.size() < m; ++i) {
        Eigen::VectorXd u = Eigen::VectorXd::Unit(dim, i);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) u -= b.dot(u) * b;
        }
        if (u.norm() > 1e-6) basis.push_back(u.normalized());
    }
    Eigen::MatrixXd q(dim, static_cast<Eigen::Index>(basis.size() - constrained));
    for (std::size_t i = constrained; i < basis.size(); ++i) q.col(static_cast<Eigen::Index>(i - constrained)) = basis[i];
    return q;
}

NewtonOutcome newton_minimize(const WhitenedEnsemble& whitened, Window window, const SicaConfig& config,
                              const std::vector<Eigen::VectorXd>& orthogonal_to, Eigen::VectorXd start) {
    const std::size_t m = whitened.channel_count();
    if (orthogonal_to.size() >= m) {
        throw Error(ErrorCode::InvalidArgument, "orthogonality constraints leave no free direction");
    }
    const Eigen::MatrixXd q = orthogonal_complement(orthogonal_to, m);
    const Eigen::Index r = q.cols();
    if (r == 0) throw Error(ErrorCode::InvalidArgument, "orthogonality constraints leave no free direction");

    Eigen::VectorXd v = q.transpose() * start;
    if (v.norm() < 1e-12) v = Eigen::VectorXd::Unit(r, 0);
    v.normalize();

    auto evaluate = [&](const Eigen::VectorXd& reduced) {
        const Eigen::VectorXd w = (q * reduced).normalized();
        return loss_gradient_hessian(whitened, w, window, config.z_grid);
    };

    NewtonOutcome out;
    LossDerivatives cur = evaluate(v);
    for (int step = 0;; ++step) {
        out.steps = step;
        const Eigen::VectorXd g = q.transpose() * cur.gradient;
        if (r == 1) {
            out.converged = true;
            out.gradient_norm = 0.0;
            break;
        }
        // tangent basis of the reduced sphere at v
        Eigen::MatrixXd tangent = orthogonal_complement({v}, static_cast<std::size_t>(r));
        const Eigen::VectorXd grad_t = tangent.transpose() * g;
        out.gradient_norm = grad_t.norm();
        if (out.gradient_norm < config.newton_grad_tol) {
            out.converged = true;
            break;
        }
        if (step >= config.newton_max_steps) break;

        const Eigen::MatrixXd h_reduced = q.transpose() * cur.hessian * q;
        Eigen::MatrixXd h_t = tangent.transpose() * h_reduced * tangent;
        h_t.diagonal().array() -= v.dot(g);
        h_t = 0.5 * (h_t + h_t.transpose()).eval();

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h_t, Eigen::EigenvaluesOnly);
        double lambda = eig.eigenvalues().minCoeff() > 0.0 ? 0.0 : 1e-6;
        bool accepted = false;
        while (lambda < 1e16) {
            Eigen::MatrixXd damped = h_t;
            damped.diagonal().array() += lambda;
            const Eigen::VectorXd d = damped.ldlt().solve(-grad_t);
            if (d.allFinite()) {
                const Eigen::VectorXd trial = (v + tangent * d).normalized();
                LossDerivatives next = evaluate(trial);
                if (next.loss < cur.loss) {
                    v = trial;
                    cur = std::move(next);
                    accepted = true;
                    break;
                }
            }
            lambda = std::max(lambda * 10.0, 1e-6);
        }
        if (!accepted) {
            // no further decrease representable: stationary to rounding
            out.converged = out.gradient_norm < 1e-6;
            break;
        }
    }
    out.direction = (q * v).normalized();
    out.loss = cur.loss;
    return out;
}

Eigen::VectorXd row_to_direction(const WhitenedEnsemble& whitened, const Eigen::VectorXd& unmixing_row) {
    if (static_cast<std::size_t>(unmixing_row.size()) != whitened.channel_count()) {
        throw Error(ErrorCode::DimensionMismatch, "unmixing row length differs from the channel count");
    }
    const Eigen::VectorXd d = whitened.whitening_matrix.transpose().fullPivLu().solve(unmixing_row);
    return d.normalized();
}

ComponentResult extract_component(const WhitenedEnsemble& whitened, Window window, const SicaConfig& config,
                                  const std::vector<Eigen::VectorXd>& orthogonal_to, std::uint64_t stream) {
    config.validate();
    const std::size_t m = whitened.channel_count();
    if (orthogonal_to.size() >= m) {
        throw Error(ErrorCode::InvalidArgument, "orthogonality constraints leave no free direction");
    }

    std::optional<NewtonOutcome> best;
    for (int restart = 0; restart < config.restarts; ++restart) {
        std::mt19937_64 rng(mix_seed(mix_seed(config.rng_seed ^ mix_seed(stream)) + static_cast<std::uint64_t>(restart)));
        NewtonOutcome run = newton_minimize(whitened, window, config, orthogonal_to, random_unit(rng, m));
        if (!run.converged) continue;
        if (!best || run.loss < best->loss) best = std::move(run);
    }
    if (!best) {
        throw Error(ErrorCode::NoConvergence, "no Newton restart reached the gradient tolerance");
    }

    ComponentResult out;
    out.direction = best->direction;
    out.signal = project(whitened, out.direction);
    if (out.signal.front() < 0.0) {
        out.direction = -out.direction;
        for (double& v : out.signal) v = -v;
    }
    out.unmixing_row = whitened.whitening_matrix.transpose() * out.direction;
    out.means = whitened.means;
    out.window = window;
    out.loss = sica_loss(out.signal, window, config.z_grid);
    return out;
}

FrequencyEstimate estimate_frequency(std::span<const double> signal, const TimeGrid& grid) {
    if (signal.size() < 8) throw Error(ErrorCode::InvalidArgument, "frequency estimation needs >= 8 samples");
    if (signal.size() != grid.size()) throw Error(ErrorCode::DimensionMismatch, "signal length differs from grid");

    double mean = 0.0;
    double scale = 0.0;
    for (double v : signal) {
        mean += v;
        scale = std::max(scale, std::abs(v));
    }
    mean /= static_cast<double>(signal.size());
    double variance = 0.0;
    for (double v : signal) variance += (v - mean) * (v - mean);
    variance /= static_cast<double>(signal.size());
    if (!(variance > 1e-24 * scale * scale) || scale == 0.0) {
        throw Error(ErrorCode::NoOscillation, "signal is constant");
    }

    const double peak = sinusoid::spectral_peak(signal, grid.dt(), 8);
    if (!(peak > 0.0)) throw Error(ErrorCode::NoOscillation, "spectral peak at DC");

    const sinusoid::CosineFit fit = sinusoid::fit_cosine(signal, grid, peak);
    if (!(fit.omega > 0.0) || !(fit.rss / static_cast<double>(signal.size()) < variance)) {
        throw Error(ErrorCode::NoOscillation, "cosine fit does not explain the signal");
    }
    return {fit.omega, fit.phase};
}

namespace {

RoundRecord make_round(const ComponentResult& c, const FrequencyEstimate& f) {
    RoundRecord r;
    r.window = c.window;
    r.direction = c.direction;
    r.unmixing_row = c.unmixing_row;
    r.means = c.means;
    r.signal = c.signal;
    r.frequency = f.omega;
    r.phase = f.phase;
    r.loss = c.loss;
    return r;
}

void adopt_round(ComponentResult& target, const RoundRecord& r) {
    target.direction = r.direction;
    target.unmixing_row = r.unmixing_row;
    target.means = r.means;
    target.window = r.window;
    target.signal = r.signal;
    target.frequency = r.frequency;
    target.phase = r.phase;
    target.loss = r.loss;
    target.frequency_history.push_back(r.frequency);
    target.rounds.push_back(r);
}

Window refined_window(const TimeGrid& grid, double omega, int periods) {
    const double duration = periods * 2.0 * std::numbers::pi / omega;
    std::size_t count = grid.samples_for(duration);
    count = std::min(count, grid.size());
    return {0, count};
}

}  // namespace

UnmixingSolution sica_extract(const Ensemble& raw, std::size_t n_components, const SicaConfig& config) {
    config.validate();
    const std::size_t m = raw.channel_count();
    if (n_components < 1 || n_components > m) {
        throw Error(ErrorCode::InvalidArgument, "n_components must be between 1 and the channel count");
    }
    const TimeGrid& grid = raw.grid();

    const Window first = Window::whole(grid);
    UnmixingSolution solution{"sica", {}, whiten(raw, first), config};
    solution.components.resize(n_components);

    // round 1: deflation in the whole-record frame
    std::vector<Eigen::VectorXd> taken;
    for (std::size_t i = 0; i < n_components; ++i) {
        ComponentResult& comp = solution.components[i];
        try {
            ComponentResult c = extract_component(solution.whitening_used, first, config, taken, i);
            taken.push_back(c.direction);
            const FrequencyEstimate f = estimate_frequency(c.signal, grid);
            adopt_round(comp, make_round(c, f));
        } catch (const Error& e) {
            comp.status = {false, e.code(), e.what()};
            if (taken.size() <= i) {
                // no direction to deflate against, later components are left empty
                break;
            }
        }
    }

    // later rounds: per-component windows of an integer number of periods
    std::vector<Eigen::VectorXd> finalized_rows;
    for (std::size_t i = 0; i < n_components; ++i) {
        ComponentResult& comp = solution.components[i];
        if (!comp.status.ok) continue;
        try {
            for (int k = 1; k < config.max_outer_iterations; ++k) {
                const double omega = comp.frequency;
                const Window window = refined_window(grid, omega, config.periods_per_window);
                const WhitenedEnsemble white = whiten(raw, window);
                std::vector<Eigen::VectorXd> constraints;
                for (const auto& row : finalized_rows) constraints.push_back(row_to_direction(white, row));
                const std::uint64_t stream = (static_cast<std::uint64_t>(i + 1) << 32) | static_cast<std::uint64_t>(k);
                ComponentResult c = extract_component(white, window, config, constraints, stream);
                const FrequencyEstimate f = estimate_frequency(c.signal, grid);
                adopt_round(comp, make_round(c, f));
                if (std::abs(f.omega - omega) / omega < config.freq_rel_tol) break;
            }
            finalized_rows.push_back(comp.unmixing_row);
        } catch (const Error& e) {
            comp.status = {false, e.code(), e.what()};
        }
    }

    std::stable_sort(solution.components.begin(), solution.components.end(),
                     [](const ComponentResult& a, const ComponentResult& b) {
                         if (a.status.ok != b.status.ok) return a.status.ok;
                         return a.frequency < b.frequency;
                     });
    return solution;
}

}  // namespace modesep
