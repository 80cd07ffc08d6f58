#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "modesep/error.hpp"
#include "modesep/signal.hpp"

using namespace modesep;

namespace {

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

Ensemble random_mix(std::mt19937_64& rng, int m, int n) {
    const TimeGrid grid(0.0, 0.05, static_cast<std::size_t>(n));
    Eigen::MatrixXd s = testing::random_matrix(rng, n, m);
    const Eigen::MatrixXd a = testing::random_matrix(rng, m, m) + 2.0 * Eigen::MatrixXd::Identity(m, m);
    Eigen::MatrixXd x = s * a.transpose();
    x.rowwise() += testing::random_matrix(rng, 1, m).row(0) * 3.0;
    return Ensemble(grid, x);
}

}  // namespace

TEST_CASE("time grid and windows") {
    const TimeGrid g(1.0, 0.25, 8);
    CHECK(g.time(3) == doctest::Approx(1.75));
    CHECK(g.duration() == doctest::Approx(2.0));
    CHECK(g.samples_for(1.0) == 4);
    CHECK(g.samples_for(0.37) == 1);
    CHECK(Window::whole(g).size() == 8);
    CHECK(Window{5, 3}.empty());
    CHECK(code_of([] { TimeGrid(0.0, 0.0, 4); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { TimeGrid(0.0, 1.0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("ensemble rejects non-finite samples") {
    const TimeGrid g(0.0, 1.0, 3);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
    x(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK(code_of([&] { Ensemble(g, x); }) == ErrorCode::NonFiniteSample);
    CHECK(code_of([&] { Ensemble(g, Eigen::MatrixXd::Zero(4, 2)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("whitening gives zero mean and identity covariance over the window") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 2 + trial % 4;
        const Ensemble raw = random_mix(rng, m, 300);
        const Window w{37, 251};
        const WhitenedEnsemble white = whiten(raw, w);
        const Eigen::MatrixXd cov = window_covariance(white.channels, w);
        CHECK((cov - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-10);
        const Eigen::VectorXd mean =
            white.channels.middleRows(37, 214).colwise().mean().transpose();
        CHECK(mean.cwiseAbs().maxCoeff() < 1e-12);
        // ZCA: symmetric whitening matrix
        CHECK((white.whitening_matrix - white.whitening_matrix.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("whitening errors") {
    const TimeGrid g(0.0, 1.0, 50);
    Eigen::MatrixXd x(50, 2);
    for (int k = 0; k < 50; ++k) x(k, 0) = x(k, 1) = std::sin(0.3 * k);
    CHECK(code_of([&] { whiten(Ensemble(g, x), Window::whole(g)); }) == ErrorCode::RankDeficient);
    x.col(1) = x.col(0).array().square();
    CHECK(code_of([&] { whiten(Ensemble(g, x), Window{0, 2}); }) == ErrorCode::WindowTooShort);
    CHECK(code_of([&] { whiten(Ensemble(g, x), Window{0, 60}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("empirical CGF basics") {
    const std::vector<double> c(40, 0.7);
    const std::vector<double> z{0.0, 0.5, 2.0, -1.5};
    const CgfEstimate k = empirical_cgf(c, Window{0, 40}, z);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(k.k_values[i] == doctest::Approx(0.7 * z[i]).epsilon(1e-14));

    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    std::vector<double> s(500);
    for (auto& v : s) v = n(rng);
    CHECK(empirical_cgf_at(s, Window{0, 500}, 0.0) == 0.0);

    // direct average as oracle
    for (double zz : {0.3, 1.1, 1.9}) {
        double acc = 0.0;
        for (std::size_t t = 100; t < 400; ++t) acc += std::exp(zz * s[t]);
        CHECK(empirical_cgf_at(s, Window{100, 400}, zz) == doctest::Approx(std::log(acc / 300.0)).epsilon(1e-13));
    }
}

TEST_CASE("empirical CGF survives large arguments") {
    const std::vector<double> s{800.0, 799.0, 700.0};
    const double k = empirical_cgf_at(s, Window{0, 3}, 2.0);
    const double want = 1600.0 + std::log((1.0 + std::exp(-2.0) + std::exp(-200.0)) / 3.0);
    CHECK(std::isfinite(k));
    CHECK(k == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("empirical CGF is convex and sign symmetric") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 2.0);
    std::vector<double> s(300);
    for (auto& v : s) v = u(rng);
    std::vector<double> z;
    for (int i = -20; i <= 20; ++i) z.push_back(0.1 * i);
    const auto k = empirical_cgf(s, Window{0, 300}, z).k_values;
    for (std::size_t i = 1; i + 1 < k.size(); ++i) CHECK(k[i + 1] - 2.0 * k[i] + k[i - 1] >= -1e-9);

    std::vector<double> sym;
    for (double v : s) {
        sym.push_back(v);
        sym.push_back(-v);
    }
    for (double zz : {0.4, 1.3, 2.0}) {
        CHECK(empirical_cgf_at(sym, Window{0, sym.size()}, zz) ==
              doctest::Approx(empirical_cgf_at(sym, Window{0, sym.size()}, -zz)).epsilon(1e-13));
    }
}

TEST_CASE("CSV round trip keeps every bit") {
    std::mt19937_64 rng(3);
    const Ensemble e = random_mix(rng, 3, 25);
    std::stringstream ss;
    write_ensemble_csv(ss, e);
    const Ensemble back = read_ensemble_csv(ss);
    CHECK(back.channel_count() == 3);
    CHECK(back.grid().size() == 25);
    CHECK((back.samples() - e.samples()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("CSV errors name the line") {
    auto parse = [](const std::string& text) {
        std::stringstream ss(text);
        return read_ensemble_csv(ss);
    };
    try {
        parse("t,x1\n0,1\n1,2\n2,abc\n");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
    CHECK(code_of([&] { parse("t,x1\n0,1\n1,2,3\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { parse("x,y\n0,1\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { parse("t,x1\n0,1\n1,2\n2.5,3\n"); }) == ErrorCode::UngriddedData);
    CHECK(code_of([&] { parse("t,x1\n0,1\n1,nan\n"); }) == ErrorCode::NonFiniteSample);
    CHECK(code_of([] { read_ensemble_csv(std::string("/nonexistent/x.csv")); }) == ErrorCode::IoError);
}
