#include "run_config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>

#include "modesep/error.hpp"

namespace modesep::cli {

using json = nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) invalid(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) invalid("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, const std::string& where, T& target) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<T>();
    } catch (const json::exception&) {
        invalid("bad value for '" + where + "." + key + "'");
    }
}

std::uint64_t read_seed(const json& obj, const char* key, const std::string& where, std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) invalid("'" + where + "." + key + "' must be an integer");
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    const auto s = v.get<std::int64_t>();
    if (s < 0) invalid("'" + where + "." + key + "' must be non-negative");
    return static_cast<std::uint64_t>(s);
}

template <class F>
void validated(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigInvalid) throw;
        invalid(e.what());
    }
}

}  // namespace

becsim::SpatialGrid RunConfig::spatial_grid() const {
    return becsim::SpatialGrid(half_width.value_or(1.3 * trap.tf_radius()), n_points);
}

std::vector<std::pair<double, double>> RunConfig::detector_points() const {
    return detectors ? *detectors : becsim::default_detectors(trap);
}

void RunConfig::set_seed(std::uint64_t seed) {
    noise.rng_seed = seed;
    sica.rng_seed = seed;
    ica.rng_seed = seed;
}

RunConfig parse_config(const json& doc) {
    RunConfig cfg;
    check_keys(doc, "", {"trap", "modes", "noise", "spatial_grid", "time_grid", "sica", "ica", "detectors",
                         "output_dir"});

    if (doc.contains("trap")) {
        const json& t = doc.at("trap");
        check_keys(t, "trap", {"m", "omega_perp", "g", "n_atoms"});
        read(t, "m", "trap", cfg.trap.m);
        read(t, "omega_perp", "trap", cfg.trap.omega_perp);
        read(t, "g", "trap", cfg.trap.g);
        read(t, "n_atoms", "trap", cfg.trap.n_atoms);
    }
    validated([&] { cfg.trap.validate(); });

    if (doc.contains("modes")) {
        const json& m = doc.at("modes");
        check_keys(m, "modes", {"amplitudes", "frequencies"});
        read(m, "amplitudes", "modes", cfg.modes.amplitudes);
        read(m, "frequencies", "modes", cfg.modes.frequencies);
    }
    validated([&] { cfg.modes.validate(); });

    if (doc.contains("noise")) {
        const json& n = doc.at("noise");
        check_keys(n, "noise", {"amplitude", "rng_seed"});
        read(n, "amplitude", "noise", cfg.noise.amplitude);
        cfg.noise.rng_seed = read_seed(n, "rng_seed", "noise", cfg.noise.rng_seed);
    }
    validated([&] { cfg.noise.validate(); });

    if (doc.contains("spatial_grid")) {
        const json& g = doc.at("spatial_grid");
        check_keys(g, "spatial_grid", {"half_width", "n_points"});
        if (g.contains("half_width")) {
            double hw = 0.0;
            read(g, "half_width", "spatial_grid", hw);
            cfg.half_width = hw;
        }
        read(g, "n_points", "spatial_grid", cfg.n_points);
    }
    validated([&] { (void)cfg.spatial_grid(); });

    if (doc.contains("time_grid")) {
        const json& g = doc.at("time_grid");
        check_keys(g, "time_grid", {"t0", "dt", "n_samples"});
        double t0 = cfg.time_grid.t0(), dt = cfg.time_grid.dt();
        std::size_t n = cfg.time_grid.size();
        read(g, "t0", "time_grid", t0);
        read(g, "dt", "time_grid", dt);
        read(g, "n_samples", "time_grid", n);
        validated([&] { cfg.time_grid = TimeGrid(t0, dt, n); });
    }

    if (doc.contains("sica")) {
        const json& s = doc.at("sica");
        check_keys(s, "sica", {"z_grid", "periods_per_window", "max_outer_iterations", "freq_rel_tol",
                               "newton_max_steps", "newton_grad_tol", "restarts", "rng_seed"});
        if (s.contains("z_grid")) {
            std::vector<double> z;
            read(s, "z_grid", "sica", z);
            validated([&] { cfg.sica.z_grid = ZGrid(z); });
        }
        read(s, "periods_per_window", "sica", cfg.sica.periods_per_window);
        read(s, "max_outer_iterations", "sica", cfg.sica.max_outer_iterations);
        read(s, "freq_rel_tol", "sica", cfg.sica.freq_rel_tol);
        read(s, "newton_max_steps", "sica", cfg.sica.newton_max_steps);
        read(s, "newton_grad_tol", "sica", cfg.sica.newton_grad_tol);
        read(s, "restarts", "sica", cfg.sica.restarts);
        cfg.sica.rng_seed = read_seed(s, "rng_seed", "sica", cfg.sica.rng_seed);
    }
    validated([&] { cfg.sica.validate(); });

    if (doc.contains("ica")) {
        const json& s = doc.at("ica");
        check_keys(s, "ica", {"contrast", "max_iterations", "tol", "restarts", "rng_seed"});
        if (s.contains("contrast")) {
            std::string name;
            read(s, "contrast", "ica", name);
            validated([&] { cfg.ica.contrast = baseline::contrast_from_string(name); });
        }
        read(s, "max_iterations", "ica", cfg.ica.max_iterations);
        read(s, "tol", "ica", cfg.ica.tol);
        read(s, "restarts", "ica", cfg.ica.restarts);
        cfg.ica.rng_seed = read_seed(s, "rng_seed", "ica", cfg.ica.rng_seed);
    }
    validated([&] { cfg.ica.validate(); });

    if (doc.contains("detectors")) {
        std::vector<std::pair<double, double>> pts;
        read(doc, "detectors", "", pts);
        if (pts.empty()) invalid("'detectors' must list at least one point");
        const becsim::SpatialGrid grid = cfg.spatial_grid();
        validated([&] {
            for (const auto& [x, y] : pts) (void)grid.nearest_node(x, y);
        });
        cfg.detectors = pts;
    }
    if (doc.contains("output_dir")) read(doc, "output_dir", "", cfg.output_dir);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        invalid(path + ": " + e.what());
    }
    return parse_config(doc);
}

json config_to_json(const RunConfig& c) {
    json doc;
    doc["trap"] = {{"m", c.trap.m}, {"omega_perp", c.trap.omega_perp}, {"g", c.trap.g}, {"n_atoms", c.trap.n_atoms}};
    doc["modes"] = {{"amplitudes", c.modes.amplitudes}, {"frequencies", c.modes.frequencies}};
    doc["noise"] = {{"amplitude", c.noise.amplitude}, {"rng_seed", c.noise.rng_seed}};
    const becsim::SpatialGrid grid = c.spatial_grid();
    doc["spatial_grid"] = {{"half_width", grid.half_width()}, {"n_points", grid.n_points()}};
    doc["time_grid"] = {{"t0", c.time_grid.t0()}, {"dt", c.time_grid.dt()}, {"n_samples", c.time_grid.size()}};
    doc["sica"] = {{"z_grid", c.sica.z_grid.values()},
                   {"periods_per_window", c.sica.periods_per_window},
                   {"max_outer_iterations", c.sica.max_outer_iterations},
                   {"freq_rel_tol", c.sica.freq_rel_tol},
                   {"newton_max_steps", c.sica.newton_max_steps},
                   {"newton_grad_tol", c.sica.newton_grad_tol},
                   {"restarts", c.sica.restarts},
                   {"rng_seed", c.sica.rng_seed}};
    doc["ica"] = {{"contrast", std::string(baseline::to_string(c.ica.contrast))},
                  {"max_iterations", c.ica.max_iterations},
                  {"tol", c.ica.tol},
                  {"restarts", c.ica.restarts},
                  {"rng_seed", c.ica.rng_seed}};
    json det = json::array();
    for (const auto& [x, y] : c.detector_points()) det.push_back({x, y});
    doc["detectors"] = det;
    doc["output_dir"] = c.output_dir;
    return doc;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace modesep::cli
