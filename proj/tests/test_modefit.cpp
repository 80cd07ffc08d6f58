#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "modesep/error.hpp"
#include "modesep/modefit.hpp"

using namespace modesep;
using namespace modesep::becsim;
using namespace modesep::modefit;

namespace {

struct Truth {
    std::vector<double> c0;
    std::array<std::vector<double>, 3> c;
};

DensityMovie synthetic(const SpatialGrid& sg, const TimeGrid& tg, const std::array<double, 3>& w, const Truth& tr) {
    DensityMovie m{sg, tg, {}, {}, {}, {}, {}};
    for (std::size_t k = 0; k < tg.size(); ++k) {
        Field f(sg.node_count());
        for (std::size_t p = 0; p < f.size(); ++p) {
            f[p] = tr.c0[p];
            for (int i = 0; i < 3; ++i) f[p] += tr.c[i][p] * std::cos(w[i] * tg.time(k));
        }
        m.frames.push_back(std::move(f));
        m.mu.push_back(0.0);
    }
    return m;
}

Truth random_truth(std::mt19937_64& rng, std::size_t nodes) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Truth t;
    // offset keeps every node strictly positive, so nothing counts as clipped
    for (std::size_t p = 0; p < nodes; ++p) t.c0.push_back(5.0 + u(rng));
    for (auto& ci : t.c)
        for (std::size_t p = 0; p < nodes; ++p) ci.push_back(u(rng));
    return t;
}

const std::array<double, 3> kFreqs{1.0, std::numbers::sqrt2, 2.0};

}  // namespace

TEST_CASE("noise-free harmonic movies are recovered exactly") {
    std::mt19937_64 rng(8);
    const SpatialGrid sg(1.0, 9);
    const TimeGrid tg(0.0, std::numbers::pi / 100.0, 400);
    const Truth tr = random_truth(rng, sg.node_count());
    const ModeMap map = fit_amplitudes(synthetic(sg, tg, kFreqs, tr), kFreqs);
    for (std::size_t p = 0; p < sg.node_count(); ++p) {
        CHECK(std::abs(map.c0[p] - tr.c0[p]) < 1e-10);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(map.c[i][p] - tr.c[i][p]) < 1e-10);
        CHECK(map.residual_rms[p] < 1e-10);
        CHECK_FALSE(map.clipped[p]);
    }
    CHECK(map.condition_number > 1.0);
    CHECK(map.condition_number < 1e8);
}

TEST_CASE("the fit is linear and its residual is orthogonal to the basis") {
    std::mt19937_64 rng(21);
    const SpatialGrid sg(1.0, 5);
    const TimeGrid tg(0.0, 0.05, 300);
    std::normal_distribution<double> n;
    auto noisy = [&] {
        DensityMovie m = synthetic(sg, tg, kFreqs, random_truth(rng, sg.node_count()));
        for (auto& f : m.frames)
            for (auto& v : f) v += 0.3 * n(rng);
        return m;
    };
    const DensityMovie a = noisy(), b = noisy();
    DensityMovie sum = a;
    for (std::size_t k = 0; k < sum.frames.size(); ++k)
        for (std::size_t p = 0; p < sg.node_count(); ++p) sum.frames[k][p] = 2.0 * a.frames[k][p] - b.frames[k][p];
    const ModeMap ma = fit_amplitudes(a, kFreqs), mb = fit_amplitudes(b, kFreqs), ms = fit_amplitudes(sum, kFreqs);
    for (std::size_t p = 0; p < sg.node_count(); ++p) {
        CHECK(ms.c0[p] == doctest::Approx(2.0 * ma.c0[p] - mb.c0[p]).epsilon(1e-10));
        for (int i = 0; i < 3; ++i)
            CHECK(std::abs(ms.c[i][p] - (2.0 * ma.c[i][p] - mb.c[i][p])) < 1e-10);
        // residual against each basis function
        std::array<double, 4> dots{};
        for (std::size_t k = 0; k < tg.size(); ++k) {
            double model = ma.c0[p];
            for (int i = 0; i < 3; ++i) model += ma.c[i][p] * std::cos(kFreqs[i] * tg.time(k));
            const double r = a.frames[k][p] - model;
            dots[0] += r;
            for (int i = 0; i < 3; ++i) dots[i + 1] += r * std::cos(kFreqs[i] * tg.time(k));
        }
        for (double d : dots) CHECK(std::abs(d) < 1e-9);
        CHECK(ma.residual_rms[p] == doctest::Approx(0.3).epsilon(0.2));
    }
}

TEST_CASE("sine terms absorb phase offsets") {
    const SpatialGrid sg(1.0, 3);
    const TimeGrid tg(0.0, 0.05, 500);
    DensityMovie m{sg, tg, {}, {}, {}, {}, {}};
    for (std::size_t k = 0; k < tg.size(); ++k) {
        const double t = tg.time(k);
        m.frames.push_back(Field(sg.node_count(), 3.0 + 0.4 * std::cos(kFreqs[1] * t + 0.6)));
        m.mu.push_back(0.0);
    }
    const ModeMap map = fit_amplitudes(m, kFreqs, true);
    REQUIRE(map.include_sine);
    CHECK(map.c[1][4] == doctest::Approx(0.4 * std::cos(0.6)).epsilon(1e-9));
    CHECK(map.s[1][4] == doctest::Approx(-0.4 * std::sin(0.6)).epsilon(1e-9));
    CHECK(std::abs(map.c[0][4]) < 1e-9);
}

TEST_CASE("degenerate bases and bad inputs are rejected") {
    std::mt19937_64 rng(1);
    const SpatialGrid sg(1.0, 3);
    const TimeGrid tg(0.0, 0.05, 200);
    const DensityMovie m = synthetic(sg, tg, kFreqs, random_truth(rng, sg.node_count()));
    try {
        (void)fit_amplitudes(m, {1.0, 1.0, 2.0});
        FAIL("expected IllConditionedBasis");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IllConditionedBasis);
    }
    CHECK_THROWS_AS(fit_amplitudes(m, {0.0, 1.0, 2.0}), Error);
    DensityMovie short_movie = m;
    short_movie.frames.resize(5);
    short_movie.time_grid = TimeGrid(0.0, 0.05, 5);
    CHECK_THROWS_AS(fit_amplitudes(short_movie, kFreqs), Error);
}

TEST_CASE("nodes that sit at zero are flagged as clipped") {
    const SpatialGrid sg(1.0, 3);
    const TimeGrid tg(0.0, 0.1, 100);
    DensityMovie m{sg, tg, {}, {}, {}, {}, {}};
    for (std::size_t k = 0; k < tg.size(); ++k) {
        Field f(sg.node_count(), 1.0 + 0.1 * std::cos(tg.time(k)));
        f[0] = 0.0;
        f[1] = std::max(0.0, std::cos(tg.time(k)));
        m.frames.push_back(f);
        m.mu.push_back(0.0);
    }
    const ModeMap map = fit_amplitudes(m, kFreqs);
    CHECK(map.clipped[0]);
    CHECK(map.clipped[1]);
    CHECK_FALSE(map.clipped[2]);
}

TEST_CASE("symmetry scores") {
    const SpatialGrid sg(2.0, 41);
    const double radius = 1.5;
    for (Mode mode : {Mode::dipole, Mode::quadrupole, Mode::breathing}) {
        const auto ideal = ideal_pattern(mode, sg, radius);
        std::vector<double> flipped(ideal.size());
        for (std::size_t p = 0; p < ideal.size(); ++p) flipped[p] = -3.0 * ideal[p];
        CHECK(mode_symmetry_score(ideal, mode, sg, radius) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(mode_symmetry_score(flipped, mode, sg, radius) == doctest::Approx(-1.0).epsilon(1e-12));
    }
    // distinct symmetries do not overlap on a symmetric disk
    const auto d = ideal_pattern(Mode::dipole, sg, radius);
    CHECK(std::abs(mode_symmetry_score(d, Mode::quadrupole, sg, radius)) < 1e-12);
    CHECK(std::abs(mode_symmetry_score(d, Mode::breathing, sg, radius)) < 1e-12);
    const auto q = ideal_pattern(Mode::quadrupole, sg, radius);
    CHECK(std::abs(mode_symmetry_score(q, Mode::breathing, sg, radius)) < 1e-12);
    // breathing ideal has zero mean inside the radius
    double sum = 0.0;
    for (double v : ideal_pattern(Mode::breathing, sg, radius)) sum += v;
    CHECK(std::abs(sum) < 1e-10);
    CHECK_THROWS_AS(mode_symmetry_score(d, Mode::dipole, sg, radius, std::vector<bool>(3)), Error);
}

TEST_CASE("a static movie has only a C0 map") {
    const TrapParams trap;
    const SpatialGrid sg(1.3 * trap.tf_radius(), 21);
    const DensityMovie movie =
        generate_movie(trap, ModeSpec{{0, 0, 0}, kFreqs}, NoiseSpec{0.0, 0}, sg, TimeGrid(0.0, 0.1, 60));
    const ModeMap map = fit_amplitudes(movie, kFreqs);
    for (std::size_t p = 0; p < sg.node_count(); ++p) {
        CHECK(map.c0[p] == doctest::Approx(movie.frames[0][p]).epsilon(1e-9));
        for (int i = 0; i < 3; ++i) CHECK(std::abs(map.c[i][p]) < 1e-9);
    }
}

TEST_CASE("mode maps survive a save and load") {
    std::mt19937_64 rng(5);
    const SpatialGrid sg(1.0, 7);
    const TimeGrid tg(0.0, 0.05, 100);
    const ModeMap map = fit_amplitudes(synthetic(sg, tg, kFreqs, random_truth(rng, sg.node_count())), kFreqs, true);
    const auto dir = std::filesystem::temp_directory_path() / "modesep_modemap_test";
    std::filesystem::remove_all(dir);
    save_modemap(map, dir.string());
    const ModeMap back = load_modemap(dir.string());
    CHECK(back.c0 == map.c0);
    CHECK(back.c == map.c);
    CHECK(back.s == map.s);
    CHECK(back.residual_rms == map.residual_rms);
    CHECK(back.clipped == map.clipped);
    CHECK(back.frequencies == map.frequencies);
    CHECK(back.include_sine);
    CHECK(back.spatial_grid.n_points() == 7);
    CHECK(std::filesystem::exists(dir / "modemap.csv"));
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_modemap(dir.string()), Error);
}
