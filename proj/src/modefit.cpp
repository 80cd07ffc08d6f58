#include "modesep/modefit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

#include "json.hpp"
#include "modesep/error.hpp"
#include "modesep/signal.hpp"

namespace modesep::modefit {

namespace fs = std::filesystem;
using json = nlohmann::json;
using becsim::Mode;
using becsim::SpatialGrid;

namespace {

constexpr double kMaxCondition = 1e8;
constexpr double kClippedFraction = 0.2;
const char* const kCoefficientFiles[4] = {"c0.bin", "c1.bin", "c2.bin", "c3.bin"};

}  // namespace

ModeMap fit_amplitudes(const becsim::DensityMovie& movie, const std::array<double, 3>& frequencies,
                       bool include_sine) {
    const std::size_t n_frames = movie.frames.size();
    if (n_frames < 8) throw Error(ErrorCode::InvalidArgument, "amplitude fit needs at least 8 frames");
    if (n_frames != movie.time_grid.size()) {
        throw Error(ErrorCode::DimensionMismatch, "frame count differs from the time grid");
    }
    for (double w : frequencies) {
        if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "frequencies must be positive");
    }
    const std::size_t nodes = movie.spatial_grid.node_count();
    for (const auto& f : movie.frames) {
        if (f.size() != nodes) throw Error(ErrorCode::DimensionMismatch, "frame size differs from the spatial grid");
    }

    const Eigen::Index cols = include_sine ? 7 : 4;
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(n_frames), cols);
    for (std::size_t k = 0; k < n_frames; ++k) {
        const double t = movie.time_grid.time(k);
        const auto r = static_cast<Eigen::Index>(k);
        basis(r, 0) = 1.0;
        for (int i = 0; i < 3; ++i) {
            basis(r, 1 + i) = std::cos(frequencies[i] * t);
            if (include_sine) basis(r, 4 + i) = std::sin(frequencies[i] * t);
        }
    }
    const Eigen::MatrixXd normal = basis.transpose() * basis;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(cond <= kMaxCondition)) {
        throw Error(ErrorCode::IllConditionedBasis,
                    "normal matrix condition number " + format_double(cond) + " exceeds 1e8");
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(normal);

    ModeMap map{movie.spatial_grid, std::vector<double>(nodes), {}, frequencies, std::vector<double>(nodes),
                std::vector<bool>(nodes), {}, include_sine, cond};
    for (auto& m : map.c) m.assign(nodes, 0.0);
    if (include_sine) {
        for (auto& m : map.s) m.assign(nodes, 0.0);
    }

    Eigen::VectorXd y(static_cast<Eigen::Index>(n_frames));
    for (std::size_t p = 0; p < nodes; ++p) {
        std::size_t zeros = 0;
        for (std::size_t k = 0; k < n_frames; ++k) {
            const double v = movie.frames[k][p];
            y(static_cast<Eigen::Index>(k)) = v;
            if (v == 0.0) ++zeros;
        }
        const Eigen::VectorXd coef = llt.solve(basis.transpose() * y);
        const Eigen::VectorXd resid = y - basis * coef;
        map.c0[p] = coef(0);
        for (int i = 0; i < 3; ++i) {
            map.c[i][p] = coef(1 + i);
            if (include_sine) map.s[i][p] = coef(4 + i);
        }
        map.residual_rms[p] = std::sqrt(resid.squaredNorm() / static_cast<double>(n_frames));
        map.clipped[p] = static_cast<double>(zeros) > kClippedFraction * static_cast<double>(n_frames);
    }
    return map;
}

std::vector<double> ideal_pattern(Mode mode, const SpatialGrid& grid, double radius) {
    if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
    const std::size_t n = grid.n_points();
    std::vector<double> out(grid.node_count(), 0.0);
    double r2_sum = 0.0;
    std::size_t inside = 0;
    for (std::size_t iy = 0; iy < n; ++iy) {
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double x = grid.coord(ix), y = grid.coord(iy);
            const double r2 = x * x + y * y;
            if (r2 >= radius * radius) continue;
            ++inside;
            r2_sum += r2;
            switch (mode) {
                case Mode::dipole: out[iy * n + ix] = x; break;
                case Mode::quadrupole: out[iy * n + ix] = x * x - y * y; break;
                case Mode::breathing: out[iy * n + ix] = r2; break;
            }
        }
    }
    if (mode == Mode::breathing && inside > 0) {
        const double mean = r2_sum / static_cast<double>(inside);
        for (std::size_t iy = 0; iy < n; ++iy) {
            for (std::size_t ix = 0; ix < n; ++ix) {
                const double x = grid.coord(ix), y = grid.coord(iy);
                if (x * x + y * y < radius * radius) out[iy * n + ix] -= mean;
            }
        }
    }
    return out;
}

double mode_symmetry_score(const std::vector<double>& map, Mode mode, const SpatialGrid& grid, double radius,
                           const std::vector<bool>& excluded) {
    if (map.size() != grid.node_count()) throw Error(ErrorCode::DimensionMismatch, "map size differs from the grid");
    if (!excluded.empty() && excluded.size() != map.size()) {
        throw Error(ErrorCode::DimensionMismatch, "exclusion mask size differs from the grid");
    }
    const std::vector<double> pattern = ideal_pattern(mode, grid, radius);
    const std::size_t n = grid.n_points();
    double dot = 0.0, mm = 0.0, pp = 0.0;
    for (std::size_t iy = 0; iy < n; ++iy) {
        for (std::size_t ix = 0; ix < n; ++ix) {
            const std::size_t p = iy * n + ix;
            const double x = grid.coord(ix), y = grid.coord(iy);
            if (x * x + y * y >= radius * radius) continue;
            if (!excluded.empty() && excluded[p]) continue;
            dot += map[p] * pattern[p];
            mm += map[p] * map[p];
            pp += pattern[p] * pattern[p];
        }
    }
    if (!(mm > 0.0) || !(pp > 0.0)) return 0.0;
    return std::clamp(dot / std::sqrt(mm * pp), -1.0, 1.0);
}

void save_modemap(const ModeMap& map, const std::string& directory, bool with_csv) {
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + directory + ": " + ec.message());
    const fs::path dir(directory);

    becsim::write_f64((dir / kCoefficientFiles[0]).string(), map.c0);
    for (int i = 0; i < 3; ++i) becsim::write_f64((dir / kCoefficientFiles[1 + i]).string(), map.c[i]);
    becsim::write_f64((dir / "residual_rms.bin").string(), map.residual_rms);

    std::vector<std::size_t> clipped;
    for (std::size_t p = 0; p < map.clipped.size(); ++p) {
        if (map.clipped[p]) clipped.push_back(p);
    }
    json meta;
    meta["spatial_grid"] = {{"half_width", map.spatial_grid.half_width()},
                            {"n_points", map.spatial_grid.n_points()}};
    meta["frequencies"] = map.frequencies;
    meta["include_sine"] = map.include_sine;
    meta["condition_number"] = map.condition_number;
    meta["arrays"] = {{"c0", kCoefficientFiles[0]},
                      {"c1", kCoefficientFiles[1]},
                      {"c2", kCoefficientFiles[2]},
                      {"c3", kCoefficientFiles[3]},
                      {"residual_rms", "residual_rms.bin"}};
    meta["array_format"] = "float64 little-endian, row-major (y outer, x inner)";
    meta["clipped_nodes"] = clipped;
    if (map.include_sine) {
        json sine;
        for (int i = 0; i < 3; ++i) {
            const std::string name = "s" + std::to_string(i + 1) + ".bin";
            becsim::write_f64((dir / name).string(), map.s[i]);
            sine["s" + std::to_string(i + 1)] = name;
        }
        meta["sine_arrays"] = sine;
    }
    std::ofstream out(dir / "modemap.json", std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write modemap.json in " + directory);
    out << meta.dump(2) << '\n';

    if (with_csv) {
        std::ofstream csv(dir / "modemap.csv", std::ios::binary);
        if (!csv) throw Error(ErrorCode::IoError, "cannot write modemap.csv in " + directory);
        csv << "x,y,C0,C1,C2,C3\n";
        const std::size_t n = map.spatial_grid.n_points();
        for (std::size_t iy = 0; iy < n; ++iy) {
            for (std::size_t ix = 0; ix < n; ++ix) {
                const std::size_t p = iy * n + ix;
                csv << format_double(map.spatial_grid.coord(ix)) << ',' << format_double(map.spatial_grid.coord(iy))
                    << ',' << format_double(map.c0[p]) << ',' << format_double(map.c[0][p]) << ','
                    << format_double(map.c[1][p]) << ',' << format_double(map.c[2][p]) << '\n';
            }
        }
    }
}

ModeMap load_modemap(const std::string& directory) {
    const fs::path dir(directory);
    std::ifstream in(dir / "modemap.json");
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + (dir / "modemap.json").string());
    try {
        const json meta = json::parse(in);
        const SpatialGrid grid(meta.at("spatial_grid").at("half_width"), meta.at("spatial_grid").at("n_points"));
        const std::size_t nodes = grid.node_count();
        ModeMap map{grid, {}, {}, meta.at("frequencies"), {}, std::vector<bool>(nodes), {},
                    meta.at("include_sine"), meta.at("condition_number")};
        map.c0 = becsim::read_f64((dir / meta.at("arrays").at("c0").get<std::string>()).string(), nodes);
        for (int i = 0; i < 3; ++i) {
            const std::string key = "c" + std::to_string(i + 1);
            map.c[i] = becsim::read_f64((dir / meta.at("arrays").at(key).get<std::string>()).string(), nodes);
        }
        map.residual_rms =
            becsim::read_f64((dir / meta.at("arrays").at("residual_rms").get<std::string>()).string(), nodes);
        for (std::size_t p : meta.at("clipped_nodes").get<std::vector<std::size_t>>()) {
            if (p >= nodes) throw Error(ErrorCode::IoError, "clipped node index out of range");
            map.clipped[p] = true;
        }
        if (map.include_sine) {
            for (int i = 0; i < 3; ++i) {
                const std::string key = "s" + std::to_string(i + 1);
                map.s[i] = becsim::read_f64((dir / meta.at("sine_arrays").at(key).get<std::string>()).string(), nodes);
            }
        }
        return map;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, (dir / "modemap.json").string() + ": " + e.what());
    }
}

}  // namespace modesep::modefit
