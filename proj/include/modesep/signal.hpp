#pragma once

// Multichannel time-series containers, whitening and empirical
// cumulant-generating functions.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace modesep {

/// Uniform sampling grid. Sample k sits at t0 + k*dt.
class TimeGrid {
public:
    TimeGrid(double t0, double dt, std::size_t n_samples);

    double t0() const noexcept { return t0_; }
    double dt() const noexcept { return dt_; }
    std::size_t size() const noexcept { return n_; }
    double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
    double duration() const noexcept { return static_cast<double>(n_) * dt_; }

    /// Number of samples covering a duration, round(T/dt).
    std::size_t samples_for(double duration) const;

    bool operator==(const TimeGrid&) const = default;

private:
    double t0_;
    double dt_;
    std::size_t n_;
};

/// Half-open sample-index range [begin, end).
struct Window {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
    bool empty() const noexcept { return end <= begin; }

    static Window whole(const TimeGrid& grid) { return {0, grid.size()}; }

    bool operator==(const Window&) const = default;
};

/// Raw measurements x_j(t): one column per channel, one row per sample.
class Ensemble {
public:
    Ensemble(TimeGrid grid, Eigen::MatrixXd samples);
    Ensemble(TimeGrid grid, const std::vector<std::vector<double>>& channels);

    const TimeGrid& grid() const noexcept { return grid_; }
    const Eigen::MatrixXd& samples() const noexcept { return samples_; }
    std::size_t channel_count() const noexcept { return static_cast<std::size_t>(samples_.cols()); }
    std::vector<double> channel(std::size_t j) const;

private:
    TimeGrid grid_;
    Eigen::MatrixXd samples_;
};

/// Zero-mean, identity-covariance channels over `window`, together with the
/// affine map that produced them: channels = (raw - means) * W^T.
struct WhitenedEnsemble {
    TimeGrid grid;
    Window window;
    Eigen::MatrixXd channels;
    Eigen::VectorXd means;
    Eigen::MatrixXd whitening_matrix;

    std::size_t channel_count() const noexcept { return static_cast<std::size_t>(channels.cols()); }
};

struct CgfEstimate {
    std::vector<double> z_values;
    std::vector<double> k_values;
};

/// ZCA whitening over a window using the population covariance.
/// Throws WindowTooShort or RankDeficient.
WhitenedEnsemble whiten(const Ensemble& raw, Window window);

/// K(z) = log mean_{t in window} exp(z s(t)), evaluated with a max shift.
CgfEstimate empirical_cgf(std::span<const double> signal, Window window,
                          std::span<const double> z_values);

/// Single-z variant of empirical_cgf.
double empirical_cgf_at(std::span<const double> signal, Window window, double z);

/// Per-sample dot product of `direction` with the whitened channels.
std::vector<double> project(const WhitenedEnsemble& whitened,
                            const Eigen::Ref<const Eigen::VectorXd>& direction);

/// Population covariance of the columns of `samples` restricted to `window`.
Eigen::MatrixXd window_covariance(const Eigen::MatrixXd& samples, Window window);

// CSV with header `t,x1,...,xM` (or any column names after `t`).
Ensemble read_ensemble_csv(std::istream& in);
Ensemble read_ensemble_csv(const std::string& path);
void write_ensemble_csv(std::ostream& out, const Ensemble& ensemble,
                        const std::string& column_prefix = "x");
void write_ensemble_csv(const std::string& path, const Ensemble& ensemble,
                        const std::string& column_prefix = "x");

/// 17-significant-digit text form used by every CSV/JSON writer.
std::string format_double(double value);

}  // namespace modesep
