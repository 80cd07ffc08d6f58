#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "modesep/signal.hpp"

namespace testing {

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

inline std::vector<double> cosine(const modesep::TimeGrid& g, double w, double amp = std::numbers::sqrt2,
                                  double phase = 0.0) {
    std::vector<double> s(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) s[k] = amp * std::cos(w * g.time(k) + phase);
    return s;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> n;
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

}  // namespace testing
