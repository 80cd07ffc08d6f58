#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner.

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <Eigen/Dense>

#include "modesep/sica.hpp"

namespace oracle {

// log of (1/pi) * integral of exp(z u) / sqrt(2 - u^2) over (-sqrt2, sqrt2)
inline double reference_cgf_quadrature(double z) {
    boost::math::quadrature::tanh_sinh<double> integrator;
    const double r = std::numbers::sqrt2;
    // xc is the signed distance to the nearest end: a - u near a, b - u near b
    auto density = [z, r](double u, double xc) {
        const double left = xc < 0.0 ? -xc : r + u;
        const double right = xc > 0.0 ? xc : r - u;
        // abscissae that round onto an end point carry no weight
        if (!(left > 0.0 && right > 0.0)) return 0.0;
        return std::exp(z * u) / (std::sqrt(left) * std::sqrt(right));
    };
    const double integral = integrator.integrate(density, -r, r, 1e-15);
    return std::log(integral / std::numbers::pi);
}

struct DerivativeCheck {
    double gradient_rel = 0.0;
    double hessian_rel = 0.0;
};

// Central differences of the loss alone, taken as a function of an
// unnormalized direction.
inline DerivativeCheck check_derivatives(const modesep::WhitenedEnsemble& white, const Eigen::VectorXd& w,
                                         modesep::Window window, const modesep::ZGrid& z) {
    const auto m = w.size();
    auto loss = [&](const Eigen::VectorXd& v) {
        return modesep::sica_loss(modesep::project(white, v), window, z);
    };
    const modesep::LossDerivatives d = modesep::loss_gradient_hessian(white, w, window, z);
    Eigen::VectorXd g_fd(m);
    Eigen::MatrixXd h_fd(m, m);
    const double hg = 1e-6, hh = 1e-4;
    auto unit = [m](Eigen::Index i) { return Eigen::VectorXd::Unit(m, i); };
    const double f0 = loss(w);
    for (Eigen::Index i = 0; i < m; ++i) {
        g_fd(i) = (loss(w + hg * unit(i)) - loss(w - hg * unit(i))) / (2.0 * hg);
        h_fd(i, i) = (loss(w + hh * unit(i)) - 2.0 * f0 + loss(w - hh * unit(i))) / (hh * hh);
        for (Eigen::Index j = 0; j < i; ++j) {
            const Eigen::VectorXd a = hh * unit(i), b = hh * unit(j);
            h_fd(i, j) = h_fd(j, i) =
                (loss(w + a + b) - loss(w + a - b) - loss(w - a + b) + loss(w - a - b)) / (4.0 * hh * hh);
        }
    }
    DerivativeCheck out;
    out.gradient_rel = (d.gradient - g_fd).norm() / std::max(g_fd.norm(), 1e-12);
    out.hessian_rel = (d.hessian - h_fd).norm() / std::max(h_fd.norm(), 1e-12);
    return out;
}

}  // namespace oracle
