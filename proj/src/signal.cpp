#include "modesep/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "modesep/error.hpp"

namespace modesep {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonFiniteSample: return "NonFiniteSample";
        case ErrorCode::WindowTooShort: return "WindowTooShort";
        case ErrorCode::EmptyWindow: return "EmptyWindow";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::UngriddedData: return "UngriddedData";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::NoOscillation: return "NoOscillation";
        case ErrorCode::FitDiverged: return "FitDiverged";
        case ErrorCode::BracketingFailed: return "BracketingFailed";
        case ErrorCode::PointOutsideGrid: return "PointOutsideGrid";
        case ErrorCode::IllConditionedBasis: return "IllConditionedBasis";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

TimeGrid::TimeGrid(double t0, double dt, std::size_t n_samples) : t0_(t0), dt_(dt), n_(n_samples) {
    if (!std::isfinite(t0) || !std::isfinite(dt) || !(dt > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "time grid needs finite t0 and dt > 0");
    }
    if (n_samples < 2) {
        throw Error(ErrorCode::InvalidArgument, "time grid needs at least 2 samples");
    }
}

std::size_t TimeGrid::samples_for(double duration) const {
    if (!(duration >= 0.0) || !std::isfinite(duration)) {
        throw Error(ErrorCode::InvalidArgument, "window duration must be finite and non-negative");
    }
    return static_cast<std::size_t>(std::llround(duration / dt_));
}

namespace {

void check_finite(const Eigen::MatrixXd& samples) {
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
        for (Eigen::Index k = 0; k < samples.rows(); ++k) {
            if (!std::isfinite(samples(k, j))) {
                std::ostringstream msg;
                msg << "non-finite sample at row " << k << ", channel " << j + 1;
                throw Error(ErrorCode::NonFiniteSample, msg.str());
            }
        }
    }
}

void check_window(Window window, std::size_t n) {
    if (window.empty()) throw Error(ErrorCode::EmptyWindow, "statistics window is empty");
    if (window.end > n) {
        throw Error(ErrorCode::InvalidArgument, "statistics window extends past the record");
    }
}

}  // namespace

Ensemble::Ensemble(TimeGrid grid, Eigen::MatrixXd samples) : grid_(grid), samples_(std::move(samples)) {
    if (samples_.cols() < 1) throw Error(ErrorCode::InvalidArgument, "ensemble needs at least one channel");
    if (static_cast<std::size_t>(samples_.rows()) != grid_.size()) {
        throw Error(ErrorCode::DimensionMismatch, "channel length differs from the time grid");
    }
    check_finite(samples_);
}

Ensemble::Ensemble(TimeGrid grid, const std::vector<std::vector<double>>& channels)
    : Ensemble(grid, [&] {
          Eigen::MatrixXd m(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(channels.size()));
          for (std::size_t j = 0; j < channels.size(); ++j) {
              if (channels[j].size() != grid.size()) {
                  throw Error(ErrorCode::DimensionMismatch, "channel length differs from the time grid");
              }
              for (std::size_t k = 0; k < grid.size(); ++k) m(k, j) = channels[j][k];
          }
          return m;
      }()) {}

std::vector<double> Ensemble::channel(std::size_t j) const {
    const auto col = samples_.col(static_cast<Eigen::Index>(j));
    return {col.data(), col.data() + col.size()};
}

Eigen::MatrixXd window_covariance(const Eigen::MatrixXd& samples, Window window) {
    check_window(window, static_cast<std::size_t>(samples.rows()));
    const auto block = samples.middleRows(static_cast<Eigen::Index>(window.begin),
                                          static_cast<Eigen::Index>(window.size()));
    const Eigen::RowVectorXd mean = block.colwise().mean();
    const Eigen::MatrixXd centered = block.rowwise() - mean;
    return (centered.transpose() * centered) / static_cast<double>(window.size());
}

WhitenedEnsemble whiten(const Ensemble& raw, Window window) {
    const std::size_t m = raw.channel_count();
    check_window(window, raw.grid().size());
    if (window.size() < m + 1) {
        throw Error(ErrorCode::WindowTooShort, "whitening window needs at least M+1 samples");
    }

    const auto block = raw.samples().middleRows(static_cast<Eigen::Index>(window.begin),
                                                static_cast<Eigen::Index>(window.size()));
    const Eigen::VectorXd means = block.colwise().mean().transpose();
    const Eigen::MatrixXd cov = window_covariance(raw.samples(), window);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double largest = lambda.maxCoeff();
    if (!(largest > 0.0) || !(lambda.minCoeff() > 1e-12 * largest)) {
        throw Error(ErrorCode::RankDeficient,
                    "channel covariance is (nearly) singular; detectors are redundant");
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    Eigen::MatrixXd w = v * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    // symmetrize to remove rounding asymmetry
    w = 0.5 * (w + w.transpose()).eval();

    WhitenedEnsemble out{raw.grid(), window, {}, means, w};
    out.channels = (raw.samples().rowwise() - means.transpose()) * w.transpose();
    return out;
}

double empirical_cgf_at(std::span<const double> signal, Window window, double z) {
    if (window.empty()) throw Error(ErrorCode::EmptyWindow, "statistics window is empty");
    if (window.end > signal.size()) {
        throw Error(ErrorCode::InvalidArgument, "statistics window extends past the signal");
    }
    if (!std::isfinite(z)) throw Error(ErrorCode::InvalidArgument, "z must be finite");
    if (z == 0.0) return 0.0;

    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t k = window.begin; k < window.end; ++k) shift = std::max(shift, z * signal[k]);
    double sum = 0.0;
    for (std::size_t k = window.begin; k < window.end; ++k) sum += std::exp(z * signal[k] - shift);
    return shift + std::log(sum / static_cast<double>(window.size()));
}

CgfEstimate empirical_cgf(std::span<const double> signal, Window window, std::span<const double> z_values) {
    CgfEstimate out;
    out.z_values.assign(z_values.begin(), z_values.end());
    out.k_values.reserve(z_values.size());
    for (double z : z_values) out.k_values.push_back(empirical_cgf_at(signal, window, z));
    return out;
}

std::vector<double> project(const WhitenedEnsemble& whitened, const Eigen::Ref<const Eigen::VectorXd>& direction) {
    if (static_cast<std::size_t>(direction.size()) != whitened.channel_count()) {
        throw Error(ErrorCode::DimensionMismatch, "direction length differs from the channel count");
    }
    const Eigen::VectorXd s = whitened.channels * direction;
    return {s.data(), s.data() + s.size()};
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_number(const std::string& text, std::size_t line_no) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
    if (used == 0 || used != text.size()) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line_no) + ": cannot parse number '" + text + "'");
    }
    return value;
}

}  // namespace

Ensemble read_ensemble_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "line 1: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header.front() != "t") {
        throw Error(ErrorCode::ParseError, "line 1: header must be `t,x1,...,xM`");
    }
    const std::size_t m = header.size() - 1;

    std::vector<double> times;
    std::vector<std::vector<double>> columns(m);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != m + 1) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(m + 1) + " fields, got " +
                                                   std::to_string(cells.size()));
        }
        times.push_back(parse_number(cells[0], line_no));
        for (std::size_t j = 0; j < m; ++j) {
            const double v = parse_number(cells[j + 1], line_no);
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::NonFiniteSample, "line " + std::to_string(line_no) + ": non-finite sample");
            }
            columns[j].push_back(v);
        }
    }
    if (times.size() < 2) throw Error(ErrorCode::ParseError, "CSV needs at least two data rows");

    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double step = times[k] - times[k - 1];
        if (!(std::abs(step - dt) < 1e-9 * dt)) {
            throw Error(ErrorCode::UngriddedData,
                        "line " + std::to_string(k + 2) + ": time step deviates from the uniform grid");
        }
    }
    return Ensemble(TimeGrid(times.front(), dt, times.size()), columns);
}

Ensemble read_ensemble_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return read_ensemble_csv(in);
}

void write_ensemble_csv(std::ostream& out, const Ensemble& ensemble, const std::string& column_prefix) {
    const auto& x = ensemble.samples();
    out << 't';
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << ',' << column_prefix << j + 1;
    out << '\n';
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
        out << format_double(ensemble.grid().time(static_cast<std::size_t>(k)));
        for (Eigen::Index j = 0; j < x.cols(); ++j) out << ',' << format_double(x(k, j));
        out << '\n';
    }
}

void write_ensemble_csv(const std::string& path, const Ensemble& ensemble, const std::string& column_prefix) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    write_ensemble_csv(out, ensemble, column_prefix);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace modesep
