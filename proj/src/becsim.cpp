#include "modesep/becsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <thread>

#include <boost/math/quadrature/gauss.hpp>
#include "json.hpp"

#include "modesep/error.hpp"

namespace modesep::becsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void require(bool ok, const char* message) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, message);
}

}  // namespace

void TrapParams::validate() const {
    require(std::isfinite(m) && m > 0.0, "mass must be positive");
    require(std::isfinite(omega_perp) && omega_perp > 0.0, "trap frequency must be positive");
    require(std::isfinite(g) && g > 0.0, "interaction strength must be positive");
    require(std::isfinite(n_atoms) && n_atoms > 0.0, "atom number must be positive");
}

double TrapParams::mu0() const {
    return std::sqrt(n_atoms * g * m * omega_perp * omega_perp / std::numbers::pi);
}

double TrapParams::tf_radius() const { return std::sqrt(2.0 * mu0() / (m * omega_perp * omega_perp)); }

void ModeSpec::validate() const {
    for (std::size_t i = 0; i < 3; ++i) {
        require(std::isfinite(amplitudes[i]), "mode amplitudes must be finite");
        require(std::isfinite(frequencies[i]) && frequencies[i] > 0.0, "mode frequencies must be positive");
        for (std::size_t j = 0; j < i; ++j) {
            require(frequencies[i] != frequencies[j], "mode frequencies must be distinct");
        }
    }
}

void NoiseSpec::validate() const {
    require(std::isfinite(amplitude) && amplitude >= 0.0, "noise amplitude must be >= 0");
}

SpatialGrid::SpatialGrid(double half_width, std::size_t n_points) : half_width_(half_width), n_(n_points) {
    require(std::isfinite(half_width) && half_width > 0.0, "grid half-width must be positive");
    require(n_points >= 3 && n_points % 2 == 1, "grid point count must be odd and >= 3");
}

SpatialGrid SpatialGrid::default_for(const TrapParams& trap) { return SpatialGrid(1.3 * trap.tf_radius(), 101); }

std::size_t SpatialGrid::nearest_node(double x, double y) const {
    if (!(std::abs(x) <= half_width_) || !(std::abs(y) <= half_width_)) {
        throw Error(ErrorCode::PointOutsideGrid, "point (" + format_double(x) + ", " + format_double(y) +
                                                     ") lies outside the spatial grid");
    }
    const auto ix = static_cast<std::size_t>(std::lround((x + half_width_) / spacing()));
    const auto iy = static_cast<std::size_t>(std::lround((y + half_width_) / spacing()));
    return std::min(iy, n_ - 1) * n_ + std::min(ix, n_ - 1);
}

Field mode_pattern(const TrapParams& trap, const SpatialGrid& grid, Mode mode) {
    trap.validate();
    const double scale = trap.mu0() / trap.g;
    const double r = trap.tf_radius();
    const std::size_t n = grid.n_points();
    Field out(grid.node_count());
    for (std::size_t iy = 0; iy < n; ++iy) {
        const double y = grid.coord(iy) / r;
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double x = grid.coord(ix) / r;
            double v = 0.0;
            switch (mode) {
                case Mode::dipole: v = x; break;
                case Mode::quadrupole: v = x * x - y * y; break;
                case Mode::breathing: v = x * x + y * y; break;
            }
            out[iy * n + ix] = scale * v;
        }
    }
    return out;
}

Field perturbation_at(const TrapParams& trap, const ModeSpec& modes, const SpatialGrid& grid, double t) {
    modes.validate();
    if (!std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "time must be finite");
    Field out(grid.node_count(), 0.0);
    for (int i = 0; i < 3; ++i) {
        const double weight = modes.amplitudes[i] * std::cos(modes.frequencies[i] * t);
        if (weight == 0.0) continue;
        const Field p = mode_pattern(trap, grid, static_cast<Mode>(i));
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += weight * p[k];
    }
    return out;
}

Field noise_field(const NoiseSpec& noise, const SpatialGrid& grid, std::uint64_t frame_index) {
    noise.validate();
    Field out(grid.node_count(), 0.0);
    if (noise.amplitude == 0.0) return out;
    const std::uint64_t key = splitmix(splitmix(noise.rng_seed) ^ splitmix(frame_index + 0x632be59bd9b4e019ULL));
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double u = static_cast<double>(splitmix(key + k) >> 11) * 0x1.0p-53;
        out[k] = noise.amplitude * (2.0 * u - 1.0);
    }
    return out;
}

namespace {

// Integral over [x0,x1]x[y0,y1] of max(0, k - b (x^2 + y^2)).
double cell_integral(double k, double b, double x0, double x1, double y0, double y1) {
    if (k <= 0.0) return 0.0;
    const double rho2 = k / b;
    auto nearest = [](double lo, double hi) { return lo > 0.0 ? lo : (hi < 0.0 ? hi : 0.0); };
    const double nx = nearest(x0, x1);
    const double ny = nearest(y0, y1);
    if (nx * nx + ny * ny >= rho2) return 0.0;
    const double fx = std::max(x0 * x0, x1 * x1);
    const double fy = std::max(y0 * y0, y1 * y1);
    const double w = x1 - x0;
    const double h = y1 - y0;
    if (fx + fy <= rho2) {
        // fully inside the positive region: polynomial, exact
        const double sx = (x1 * x1 * x1 - x0 * x0 * x0) / 3.0;
        const double sy = (y1 * y1 * y1 - y0 * y0 * y0) / 3.0;
        return k * w * h - b * (sx * h + sy * w);
    }

    auto column = [&](double x) {
        const double rem = rho2 - x * x;
        if (rem <= 0.0) return 0.0;
        const double ymax = std::sqrt(rem);
        const double ya = std::max(y0, -ymax);
        const double yb = std::min(y1, ymax);
        if (yb <= ya) return 0.0;
        return (k - b * x * x) * (yb - ya) - b * (yb * yb * yb - ya * ya * ya) / 3.0;
    };
    // split where the column integrand has kinks
    std::vector<double> cuts{x0, x1};
    const double rho = std::sqrt(rho2);
    for (double c : {-rho, rho}) cuts.push_back(c);
    for (double yy : {y0, y1}) {
        if (yy * yy < rho2) {
            const double c = std::sqrt(rho2 - yy * yy);
            cuts.push_back(c);
            cuts.push_back(-c);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = std::max(cuts[i], x0);
        const double c = std::min(cuts[i + 1], x1);
        if (c <= a) continue;
        total += boost::math::quadrature::gauss<double, 20>::integrate(column, a, c);
    }
    return total;
}

}  // namespace

double atom_number(const TrapParams& trap, double mu, const Field& extra, const SpatialGrid& grid) {
    if (extra.size() != grid.node_count()) {
        throw Error(ErrorCode::DimensionMismatch, "field size differs from the spatial grid");
    }
    const double b = 0.5 * trap.m * trap.omega_perp * trap.omega_perp / trap.g;
    const double base = mu / trap.g;
    const double half = 0.5 * grid.spacing();
    const std::size_t n = grid.n_points();
    double total = 0.0;
    for (std::size_t iy = 0; iy < n; ++iy) {
        const double y = grid.coord(iy);
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double x = grid.coord(ix);
            total += cell_integral(base + extra[iy * n + ix], b, x - half, x + half, y - half, y + half);
        }
    }
    return total;
}

double solve_chemical_potential(const TrapParams& trap, const Field& perturbation, const Field& noise_frame,
                                const SpatialGrid& grid) {
    trap.validate();
    if (perturbation.size() != grid.node_count() || noise_frame.size() != grid.node_count()) {
        throw Error(ErrorCode::DimensionMismatch, "field size differs from the spatial grid");
    }
    Field extra(perturbation.size());
    for (std::size_t k = 0; k < extra.size(); ++k) extra[k] = perturbation[k] + noise_frame[k];
    const double target = trap.n_atoms;
    auto count = [&](double mu) { return atom_number(trap, mu, extra, grid); };

    const double mu0 = trap.mu0();
    double lo = mu0;
    double hi = mu0;
    double step = 0.05 * mu0;
    int expansions = 0;
    while (count(lo) > target) {
        lo -= step;
        step *= 2.0;
        if (++expansions > 60) throw Error(ErrorCode::BracketingFailed, "cannot bracket the chemical potential");
    }
    step = 0.05 * mu0;
    while (count(hi) < target) {
        hi += step;
        step *= 2.0;
        if (++expansions > 120) throw Error(ErrorCode::BracketingFailed, "cannot bracket the chemical potential");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(std::abs(lo), std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (count(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double mu = 0.5 * (lo + hi);
    if (std::abs(count(mu) - target) > 1e-6 * target) {
        throw Error(ErrorCode::BracketingFailed, "atom number is discontinuous at the target");
    }
    return mu;
}

Field density_at(const TrapParams& trap, double mu, const Field& extra, const SpatialGrid& grid) {
    if (extra.size() != grid.node_count()) {
        throw Error(ErrorCode::DimensionMismatch, "field size differs from the spatial grid");
    }
    const double b = 0.5 * trap.m * trap.omega_perp * trap.omega_perp;
    const std::size_t n = grid.n_points();
    Field out(extra.size());
    for (std::size_t iy = 0; iy < n; ++iy) {
        const double y = grid.coord(iy);
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double x = grid.coord(ix);
            const double v = (mu - b * (x * x + y * y)) / trap.g + extra[iy * n + ix];
            out[iy * n + ix] = v > 0.0 ? v : 0.0;
        }
    }
    return out;
}

double integrate(const Field& frame, const SpatialGrid& grid) {
    if (frame.size() != grid.node_count()) {
        throw Error(ErrorCode::DimensionMismatch, "field size differs from the spatial grid");
    }
    double total = 0.0;
    for (double v : frame) total += v;
    return total * grid.cell_area();
}

RenderedFrame render_frame(const TrapParams& trap, const ModeSpec& modes, const NoiseSpec& noise,
                           const SpatialGrid& grid, double t, std::uint64_t frame_index) {
    const Field pert = perturbation_at(trap, modes, grid, t);
    const Field eps = noise_field(noise, grid, frame_index);
    RenderedFrame out;
    out.mu = solve_chemical_potential(trap, pert, eps, grid);
    Field extra(pert.size());
    for (std::size_t k = 0; k < extra.size(); ++k) extra[k] = pert[k] + eps[k];
    out.density = density_at(trap, out.mu, extra, grid);
    return out;
}

DensityMovie generate_movie(const TrapParams& trap, const ModeSpec& modes, const NoiseSpec& noise,
                            const SpatialGrid& grid, const TimeGrid& time_grid) {
    trap.validate();
    modes.validate();
    noise.validate();
    DensityMovie movie{grid, time_grid, {}, {}, trap, modes, noise};
    const std::size_t n = time_grid.size();
    movie.frames.resize(n);
    movie.mu.resize(n);
    // frames are independent; each worker takes a stride of them
    const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 16);
    std::vector<std::exception_ptr> failures(workers);
    auto work = [&](std::size_t w) {
        try {
            for (std::size_t k = w; k < n; k += workers) {
                RenderedFrame f = render_frame(trap, modes, noise, grid, time_grid.time(k), k);
                movie.frames[k] = std::move(f.density);
                movie.mu[k] = f.mu;
            }
        } catch (...) {
            failures[w] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : failures) {
        if (e) std::rethrow_exception(e);
    }
    return movie;
}

TimeGrid default_time_grid() { return TimeGrid(0.0, std::numbers::pi / 100.0, 600); }

std::vector<std::pair<double, double>> default_detectors(const TrapParams& trap) {
    const double r = trap.tf_radius();
    const std::array<std::pair<double, double>, 3> polar{{{0.3, 0.3}, {0.5, 1.4}, {0.7, 2.6}}};
    std::vector<std::pair<double, double>> out;
    for (const auto& [frac, angle] : polar) out.emplace_back(frac * r * std::cos(angle), frac * r * std::sin(angle));
    return out;
}

Ensemble sample_detectors(const DensityMovie& movie, const std::vector<std::pair<double, double>>& points) {
    if (points.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one detector point");
    std::vector<std::size_t> nodes;
    for (const auto& [x, y] : points) nodes.push_back(movie.spatial_grid.nearest_node(x, y));
    Eigen::MatrixXd samples(static_cast<Eigen::Index>(movie.frames.size()), static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t k = 0; k < movie.frames.size(); ++k) {
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            samples(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = movie.frames[k][nodes[j]];
        }
    }
    return Ensemble(movie.time_grid, std::move(samples));
}

void write_f64(const std::string& path, const std::vector<double>& values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::vector<double> read_f64(const std::string& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected_count * 8) {
        throw Error(ErrorCode::IoError, path + ": expected " + std::to_string(expected_count) + " float64 values");
    }
    std::vector<double> values(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

namespace {

std::string frame_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05zu.bin", k);
    return buf;
}

}  // namespace

void save_movie(const DensityMovie& movie, const std::string& directory,
                const std::vector<std::pair<double, double>>& detector_points) {
    std::error_code ec;
    fs::create_directories(fs::path(directory) / "frames", ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + directory + ": " + ec.message());

    json meta;
    meta["trap"] = {{"m", movie.trap.m},
                    {"omega_perp", movie.trap.omega_perp},
                    {"g", movie.trap.g},
                    {"n_atoms", movie.trap.n_atoms}};
    meta["modes"] = {{"amplitudes", movie.modes.amplitudes}, {"frequencies", movie.modes.frequencies}};
    meta["noise"] = {{"amplitude", movie.noise.amplitude}, {"rng_seed", movie.noise.rng_seed}};
    meta["spatial_grid"] = {{"half_width", movie.spatial_grid.half_width()},
                            {"n_points", movie.spatial_grid.n_points()}};
    meta["time_grid"] = {{"t0", movie.time_grid.t0()},
                         {"dt", movie.time_grid.dt()},
                         {"n_samples", movie.time_grid.size()}};
    meta["mu"] = movie.mu;
    meta["frame_format"] = "float64 little-endian, row-major (y outer, x inner)";
    json frames = json::array();
    for (std::size_t k = 0; k < movie.frames.size(); ++k) {
        const std::string name = "frames/" + frame_name(k);
        write_f64((fs::path(directory) / name).string(), movie.frames[k]);
        frames.push_back(name);
    }
    meta["frames"] = frames;
    json det = json::array();
    for (const auto& [x, y] : detector_points) det.push_back({x, y});
    meta["detectors"] = det;

    std::ofstream out(fs::path(directory) / "meta.json", std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write meta.json in " + directory);
    out << meta.dump(2) << '\n';

    if (!detector_points.empty()) {
        write_ensemble_csv((fs::path(directory) / "detectors.csv").string(), sample_detectors(movie, detector_points));
    }
}

DensityMovie load_movie(const std::string& directory) {
    const fs::path meta_path = fs::path(directory) / "meta.json";
    std::ifstream in(meta_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + meta_path.string());
    json meta;
    try {
        meta = json::parse(in);
        TrapParams trap{meta.at("trap").at("m"), meta.at("trap").at("omega_perp"), meta.at("trap").at("g"),
                        meta.at("trap").at("n_atoms")};
        ModeSpec modes{meta.at("modes").at("amplitudes"), meta.at("modes").at("frequencies")};
        NoiseSpec noise{meta.at("noise").at("amplitude"), meta.at("noise").at("rng_seed")};
        SpatialGrid grid(meta.at("spatial_grid").at("half_width"), meta.at("spatial_grid").at("n_points"));
        TimeGrid tg(meta.at("time_grid").at("t0"), meta.at("time_grid").at("dt"),
                    meta.at("time_grid").at("n_samples"));
        DensityMovie movie{grid, tg, {}, meta.at("mu").get<std::vector<double>>(), trap, modes, noise};
        const auto names = meta.at("frames").get<std::vector<std::string>>();
        if (names.size() != tg.size()) throw Error(ErrorCode::IoError, "frame count differs from the time grid");
        for (const auto& name : names) {
            movie.frames.push_back(read_f64((fs::path(directory) / name).string(), grid.node_count()));
        }
        return movie;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, meta_path.string() + ": " + e.what());
    }
}

}  // namespace modesep::becsim
