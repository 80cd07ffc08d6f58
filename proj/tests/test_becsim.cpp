#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "modesep/becsim.hpp"
#include "modesep/error.hpp"

using namespace modesep;
using namespace modesep::becsim;
using std::numbers::pi;

namespace {

// N(mu) of an unclipped-by-the-grid 2D Thomas-Fermi disk
double tf_atoms(const TrapParams& t, double mu) { return pi * mu * mu / (t.g * t.m * t.omega_perp * t.omega_perp); }

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("trap parameters") {
    const TrapParams t;
    CHECK(t.mu0() == doctest::Approx(std::sqrt(1000.0 * 10.0 / pi)).epsilon(1e-15));
    CHECK(t.tf_radius() == doctest::Approx(std::sqrt(2.0 * t.mu0())).epsilon(1e-15));
    CHECK(tf_atoms(t, t.mu0()) == doctest::Approx(1000.0).epsilon(1e-13));
    CHECK_THROWS_AS((TrapParams{1.0, 1.0, -1.0, 10.0}.validate()), Error);
    CHECK_THROWS_AS((TrapParams{0.0, 1.0, 1.0, 10.0}.validate()), Error);
    CHECK_THROWS_AS((ModeSpec{{0.2, 0.2, 0.2}, {1.0, 1.0, 2.0}}.validate()), Error);
    CHECK_THROWS_AS((NoiseSpec{-0.1, 0}.validate()), Error);
}

TEST_CASE("spatial grid") {
    const SpatialGrid g(2.0, 5);
    CHECK(g.spacing() == doctest::Approx(1.0));
    CHECK(g.coord(0) == doctest::Approx(-2.0));
    CHECK(g.coord(4) == doctest::Approx(2.0));
    CHECK(g.nearest_node(0.0, 0.0) == 2 * 5 + 2);
    CHECK(g.nearest_node(1.4, -1.6) == 0 * 5 + 3);
    CHECK(code_of([&] { (void)g.nearest_node(2.6, 0.0); }) == ErrorCode::PointOutsideGrid);
    CHECK_THROWS_AS(SpatialGrid(1.0, 100), Error);
    CHECK_THROWS_AS(SpatialGrid(1.0, 1), Error);
    const TrapParams t;
    CHECK(SpatialGrid::default_for(t).half_width() == doctest::Approx(1.3 * t.tf_radius()));
    CHECK(SpatialGrid::default_for(t).n_points() == 101);
}

TEST_CASE("atom number is exact for the trap profile") {
    const TrapParams t;
    const SpatialGrid g = SpatialGrid::default_for(t);
    const Field zero(g.node_count(), 0.0);
    for (double mu : {0.5 * t.mu0(), t.mu0(), 1.2 * t.mu0()}) {
        CHECK(atom_number(t, mu, zero, g) == doctest::Approx(tf_atoms(t, mu)).epsilon(1e-12));
    }
    // a constant offset c is a shift of mu by g c
    const Field offset(g.node_count(), 0.3);
    CHECK(atom_number(t, t.mu0(), offset, g) == doctest::Approx(tf_atoms(t, t.mu0() + t.g * 0.3)).epsilon(1e-12));
    CHECK(atom_number(t, -1.0, zero, g) == 0.0);
}

TEST_CASE("chemical potential of the unperturbed cloud") {
    const TrapParams t;
    const SpatialGrid g = SpatialGrid::default_for(t);
    const Field zero(g.node_count(), 0.0);
    CHECK(solve_chemical_potential(t, zero, zero, g) == doctest::Approx(t.mu0()).epsilon(1e-9));

    const TrapParams other{2.0, 0.5, 3.0, 250.0};
    const SpatialGrid g2 = SpatialGrid::default_for(other);
    const Field z2(g2.node_count(), 0.0);
    CHECK(solve_chemical_potential(other, z2, z2, g2) == doctest::Approx(other.mu0()).epsilon(1e-9));
    CHECK_THROWS_AS(solve_chemical_potential(t, Field(3, 0.0), zero, g), Error);
}

TEST_CASE("noise is deterministic, bounded and frame dependent") {
    const SpatialGrid g(1.0, 51);
    const NoiseSpec n{0.1, 42};
    const Field a = noise_field(n, g, 7);
    CHECK(a == noise_field(n, g, 7));
    CHECK(a != noise_field(n, g, 8));
    CHECK(a != noise_field(NoiseSpec{0.1, 43}, g, 7));
    double mean = 0.0, var = 0.0;
    for (double v : a) {
        CHECK(std::abs(v) <= 0.1);
        mean += v / static_cast<double>(a.size());
    }
    for (double v : a) var += (v - mean) * (v - mean) / static_cast<double>(a.size());
    CHECK(std::abs(mean) < 0.005);
    CHECK(var == doctest::Approx(0.01 / 3.0).epsilon(0.1));
    for (double v : noise_field(NoiseSpec{0.0, 1}, g, 3)) CHECK(v == 0.0);
}

TEST_CASE("mode patterns") {
    const TrapParams t;
    const SpatialGrid g(1.3 * t.tf_radius(), 11);
    const double r = t.tf_radius(), scale = t.mu0() / t.g;
    const Field d = mode_pattern(t, g, Mode::dipole);
    const Field q = mode_pattern(t, g, Mode::quadrupole);
    const Field b = mode_pattern(t, g, Mode::breathing);
    for (std::size_t iy = 0; iy < 11; ++iy) {
        for (std::size_t ix = 0; ix < 11; ++ix) {
            const double x = g.coord(ix), y = g.coord(iy);
            const std::size_t p = iy * 11 + ix;
            CHECK(d[p] == doctest::Approx(scale * x / r));
            CHECK(q[p] == doctest::Approx(scale * (x * x - y * y) / (r * r)));
            CHECK(b[p] == doctest::Approx(scale * (x * x + y * y) / (r * r)));
        }
    }
    const ModeSpec m{{0.2, 0.0, 0.0}, {1.0, std::numbers::sqrt2, 2.0}};
    const Field p = perturbation_at(t, m, g, pi / 3.0);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(p[k] == doctest::Approx(0.2 * d[k] * 0.5));
}

TEST_CASE("rendered frames: clipped, normalized, and quiet without modes") {
    const TrapParams t;
    const SpatialGrid g = SpatialGrid::default_for(t);
    const RenderedFrame still = render_frame(t, ModeSpec{{0, 0, 0}, {1, 2, 3}}, NoiseSpec{0.0, 0}, g, 1.0, 0);
    CHECK(still.mu == doctest::Approx(t.mu0()).epsilon(1e-9));
    for (std::size_t iy = 0; iy < g.n_points(); iy += 10) {
        for (std::size_t ix = 0; ix < g.n_points(); ix += 10) {
            const double x = g.coord(ix), y = g.coord(iy);
            const double want = std::max(0.0, (t.mu0() - 0.5 * (x * x + y * y)) / t.g);
            CHECK(still.density[iy * g.n_points() + ix] == doctest::Approx(want).epsilon(1e-9));
        }
    }
    const RenderedFrame f = render_frame(t, ModeSpec{}, NoiseSpec{0.1, 3}, g, 0.7, 5);
    for (double v : f.density) CHECK(v >= 0.0);
    CHECK(integrate(f.density, g) == doctest::Approx(1000.0).epsilon(1e-3));
}

TEST_CASE("movie generation conserves atoms and persists exactly") {
    const TrapParams t;
    const SpatialGrid g(1.3 * t.tf_radius(), 41);
    const TimeGrid tg(0.0, 0.1, 12);
    const DensityMovie movie = generate_movie(t, ModeSpec{}, NoiseSpec{0.1, 9}, g, tg);
    REQUIRE(movie.frames.size() == 12);
    for (const auto& f : movie.frames) CHECK(integrate(f, g) == doctest::Approx(1000.0).epsilon(2e-3));
    // frames are independent of rendering order
    const RenderedFrame f7 = render_frame(t, ModeSpec{}, NoiseSpec{0.1, 9}, g, tg.time(7), 7);
    CHECK(f7.density == movie.frames[7]);

    const auto dir = std::filesystem::temp_directory_path() / "modesep_movie_test";
    std::filesystem::remove_all(dir);
    const std::vector<std::pair<double, double>> pts{{0.5, 0.5}, {-1.0, 2.0}};
    save_movie(movie, dir.string(), pts);
    const DensityMovie back = load_movie(dir.string());
    CHECK(back.frames == movie.frames);
    CHECK(back.mu == movie.mu);
    CHECK(back.time_grid == movie.time_grid);
    CHECK(back.noise.rng_seed == 9);
    CHECK(std::filesystem::exists(dir / "detectors.csv"));
    CHECK(std::filesystem::file_size(dir / "frames" / "frame_00000.bin") == 8 * g.node_count());
    CHECK_THROWS_AS(read_f64((dir / "frames" / "frame_00000.bin").string(), 3), Error);
    std::filesystem::remove_all(dir);
    CHECK(code_of([&] { (void)load_movie(dir.string()); }) == ErrorCode::IoError);
}

TEST_CASE("detectors sample the nearest node") {
    const TrapParams t;
    const SpatialGrid g(1.3 * t.tf_radius(), 21);
    const TimeGrid tg(0.0, 0.2, 5);
    const DensityMovie movie = generate_movie(t, ModeSpec{}, NoiseSpec{0.1, 1}, g, tg);
    const auto pts = default_detectors(t);
    REQUIRE(pts.size() == 3);
    CHECK(std::hypot(pts[0].first, pts[0].second) == doctest::Approx(0.3 * t.tf_radius()));
    CHECK(std::atan2(pts[2].second, pts[2].first) == doctest::Approx(2.6));
    const Ensemble e = sample_detectors(movie, pts);
    CHECK(e.channel_count() == 3);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(e.samples()(static_cast<Eigen::Index>(k), 1) ==
              movie.frames[k][g.nearest_node(pts[1].first, pts[1].second)]);
    }
    CHECK_THROWS_AS(sample_detectors(movie, {{100.0, 0.0}}), Error);
}

TEST_CASE("default record") {
    const TimeGrid g = default_time_grid();
    CHECK(g.size() == 600);
    CHECK(g.dt() == doctest::Approx(pi / 100.0));
    // two dipole periods hold 400 samples
    CHECK(g.samples_for(4.0 * pi) == 400);
}
