// modesep: simulate, extract, cumulants, fit.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "modesep/baseline.hpp"
#include "modesep/becsim.hpp"
#include "modesep/error.hpp"
#include "modesep/io.hpp"
#include "modesep/modefit.hpp"
#include "modesep/sica.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace modesep;

namespace {

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigInvalid: return 2;
        case ErrorCode::InvalidArgument: return 1;
        case ErrorCode::IoError:
        case ErrorCode::ParseError:
        case ErrorCode::UngriddedData:
        case ErrorCode::NonFiniteSample: return 4;
        default: return 3;
    }
}

int fail(std::string_view code, std::string message, int status) {
    std::replace(message.begin(), message.end(), '\n', ' ');
    std::cerr << "error: " << code << ": " << message << '\n';
    return status;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path make_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir + ": " + ec.message());
    return fs::path(dir);
}

// Every regular file under `root` except the manifest, by relative path.
void write_manifest(const fs::path& root, const std::string& command, const cli::RunConfig& cfg,
                    const std::vector<std::string>& inputs) {
    const std::string config_text = cli::config_to_json(cfg).dump();
    json m;
    m["command"] = command;
    m["config_hash"] = "fnv1a64:" + cli::hex64(cli::fnv1a64(config_text));
    m["config"] = cli::config_to_json(cfg);
    json in = json::array();
    for (const auto& p : inputs) {
        const fs::path path(p);
        if (fs::is_regular_file(path)) {
            in.push_back({{"name", path.filename().string()}, {"fnv1a64", cli::hex64(cli::fnv1a64(slurp(path)))}});
        } else {
            in.push_back({{"name", path.filename().string()}});
        }
    }
    m["inputs"] = in;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    json out = json::array();
    for (const auto& f : files) {
        const std::string bytes = slurp(f);
        out.push_back({{"path", fs::relative(f, root).generic_string()},
                       {"bytes", bytes.size()},
                       {"fnv1a64", cli::hex64(cli::fnv1a64(bytes))}});
    }
    m["outputs"] = out;
    io::write_text((root / "manifest.json").string(), m.dump(2) + "\n");
}

void print_solution(const UnmixingSolution& s) {
    for (std::size_t i = 0; i < s.components.size(); ++i) {
        const ComponentResult& c = s.components[i];
        std::cout << "component " << i + 1 << ": ";
        if (!c.status.ok) {
            std::cout << "status=" << to_string(c.status.code) << " (" << c.status.message << ")\n";
            continue;
        }
        std::cout << "omega=" << format_double(c.frequency) << " loss=" << format_double(c.loss)
                  << " rounds=" << c.rounds.size() << '\n';
    }
}

int cmd_simulate(const cli::RunConfig& cfg, const std::string& config_path) {
    const fs::path root = make_out_dir(cfg.output_dir);
    const becsim::DensityMovie movie =
        becsim::generate_movie(cfg.trap, cfg.modes, cfg.noise, cfg.spatial_grid(), cfg.time_grid);
    const auto points = cfg.detector_points();
    becsim::save_movie(movie, (root / "movie").string(), points);
    write_ensemble_csv((root / "detectors.csv").string(), becsim::sample_detectors(movie, points));
    write_manifest(root, "simulate", cfg, config_path.empty() ? std::vector<std::string>{}
                                                              : std::vector<std::string>{config_path});
    std::cout << "wrote " << movie.frames.size() << " frames and " << points.size() << " detector channels to "
              << root.string() << '\n';
    return 0;
}

int cmd_extract(const cli::RunConfig& cfg, const std::string& detectors, const std::string& method,
                std::optional<std::size_t> n_components) {
    const Ensemble raw = read_ensemble_csv(detectors);
    const std::size_t n = n_components.value_or(raw.channel_count());
    UnmixingSolution solution = method == "ica"
                                    ? baseline::negentropy_extract(raw, n, cfg.ica, Window::whole(raw.grid()))
                                    : sica_extract(raw, n, cfg.sica);
    const fs::path root = make_out_dir(cfg.output_dir);
    io::write_solution_json(solution, (root / "solution.json").string());
    io::write_components_csv(solution, (root / "components.csv").string());
    if (method == "sica") {
        io::write_components_csv(solution, (root / "components_round1.csv").string(), 0);
        io::write_components_csv(solution, (root / "components_round2.csv").string(), 1);
    }
    write_manifest(root, "extract", cfg, {detectors});
    print_solution(solution);
    const bool any_ok = std::any_of(solution.components.begin(), solution.components.end(),
                                    [](const ComponentResult& c) { return c.status.ok; });
    return any_ok ? 0 : fail(to_string(solution.components.front().status.code), "no component was extracted", 3);
}

// Statistics windows per CSV column, from a solution document.
std::vector<Window> windows_from_solution(const std::string& path, std::optional<int> round) {
    json doc;
    try {
        doc = json::parse(slurp(path));
        std::vector<Window> out;
        for (const auto& c : doc.at("components")) {
            if (!c.at("status").at("ok").get<bool>()) continue;
            const json* w = &c.at("window");
            if (round) {
                const auto& rounds = c.at("rounds");
                if (rounds.empty()) throw Error(ErrorCode::IoError, path + ": component without rounds");
                const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(*round - 1), rounds.size() - 1);
                w = &rounds.at(k).at("window");
            }
            const auto begin = w->at("start_index").get<std::size_t>();
            out.push_back({begin, begin + w->at("sample_count").get<std::size_t>()});
        }
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, path + ": " + e.what());
    }
}

int cmd_cumulants(const cli::RunConfig& cfg, const std::string& components, std::vector<double> z,
                  const std::string& solution_path, std::optional<int> round) {
    if (z.empty()) z = cfg.sica.z_grid.values();
    for (double v : z) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "z values must be finite");
    }
    if (round && *round < 1) throw Error(ErrorCode::InvalidArgument, "--round counts from 1");
    const Ensemble comps = read_ensemble_csv(components);
    const std::size_t n = comps.channel_count();
    std::vector<Window> windows(n, Window::whole(comps.grid()));
    if (!solution_path.empty()) {
        windows = windows_from_solution(solution_path, round);
        if (windows.size() != n) {
            throw Error(ErrorCode::DimensionMismatch, "solution and components CSV disagree on the component count");
        }
    }
    std::vector<std::vector<double>> k(n);
    for (std::size_t j = 0; j < n; ++j) k[j] = empirical_cgf(comps.channel(j), windows[j], z).k_values;

    const fs::path root = make_out_dir(cfg.output_dir);
    std::ostringstream csv;
    csv << 'z';
    for (std::size_t j = 0; j < n; ++j) csv << ",K_s" << j + 1;
    csv << ",K_ref\n";
    std::vector<double> worst(n, 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double ref = reference_cgf(z[i]);
        csv << format_double(z[i]);
        for (std::size_t j = 0; j < n; ++j) {
            csv << ',' << format_double(k[j][i]);
            worst[j] = std::max(worst[j], std::abs(k[j][i] - ref));
        }
        csv << ',' << format_double(ref) << '\n';
    }
    io::write_text((root / "cumulants.csv").string(), csv.str());
    std::vector<std::string> inputs{components};
    if (!solution_path.empty()) inputs.push_back(solution_path);
    write_manifest(root, "cumulants", cfg, inputs);
    for (std::size_t j = 0; j < n; ++j) {
        std::cout << "s" << j + 1 << ": max |K - K_ref| = " << format_double(worst[j]) << '\n';
    }
    return 0;
}

std::array<double, 3> frequencies_from_solution(const std::string& path) {
    try {
        const json doc = json::parse(slurp(path));
        std::vector<double> f;
        for (const auto& c : doc.at("components")) {
            if (c.at("status").at("ok").get<bool>()) f.push_back(c.at("frequency").get<double>());
        }
        if (f.size() != 3) {
            throw Error(ErrorCode::InvalidArgument, path + ": need exactly three extracted frequencies");
        }
        std::sort(f.begin(), f.end());
        return {f[0], f[1], f[2]};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, path + ": " + e.what());
    }
}

int cmd_fit(const cli::RunConfig& cfg, const std::string& movie_dir, const std::vector<double>& freqs,
            const std::string& solution_path, bool sine, bool csv) {
    std::array<double, 3> w{};
    if (!freqs.empty()) {
        if (freqs.size() != 3) throw Error(ErrorCode::InvalidArgument, "--frequencies takes three values");
        std::copy(freqs.begin(), freqs.end(), w.begin());
    } else if (!solution_path.empty()) {
        w = frequencies_from_solution(solution_path);
    } else {
        throw Error(ErrorCode::InvalidArgument, "fit needs --frequencies or --solution");
    }
    const becsim::DensityMovie movie = becsim::load_movie(movie_dir);
    const modefit::ModeMap map = modefit::fit_amplitudes(movie, w, sine);
    const fs::path root = make_out_dir(cfg.output_dir);
    modefit::save_modemap(map, (root / "modemap").string(), csv);

    const double radius = movie.trap.tf_radius();
    const char* names[3] = {"dipole", "quadrupole", "breathing"};
    json scores;
    scores["radius"] = radius;
    scores["frequencies"] = w;
    for (int i = 0; i < 3; ++i) {
        const double s = modefit::mode_symmetry_score(map.c[i], static_cast<becsim::Mode>(i), map.spatial_grid,
                                                      radius, map.clipped);
        scores[names[i]] = s;
        std::cout << "C" << i + 1 << " " << names[i] << " score " << format_double(s) << '\n';
    }
    io::write_text((root / "scores.json").string(), scores.dump(2) + "\n");
    std::vector<std::string> inputs{(fs::path(movie_dir) / "meta.json").string()};
    if (!solution_path.empty()) inputs.push_back(solution_path);
    write_manifest(root, "fit", cfg, inputs);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blind separation of single-frequency modes from mixed time series"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "overrides every rng seed");
    app.add_option("--out", out_dir, "output directory");

    auto* sim = app.add_subcommand("simulate", "render the condensate movie and detector traces");

    auto* ext = app.add_subcommand("extract", "separate components from a detectors CSV");
    std::string detectors, method = "sica";
    std::optional<std::size_t> n_components;
    ext->add_option("detectors", detectors, "CSV with header t,x1,...,xM")->required();
    ext->add_option("--method", method, "sica or ica")->check(CLI::IsMember({"sica", "ica"}));
    ext->add_option("--components", n_components, "number of components (default: channel count)");

    auto* cum = app.add_subcommand("cumulants", "empirical CGF of component signals against the reference");
    std::string components, cum_solution;
    std::vector<double> z;
    std::optional<int> round;
    cum->add_option("components", components, "components CSV")->required();
    cum->add_option("--z", z, "z values (default: config z-grid)")->delimiter(',');
    cum->add_option("--solution", cum_solution, "solution.json giving each component's window");
    cum->add_option("--round", round, "take windows from this round (1-based) of the solution");

    auto* fit = app.add_subcommand("fit", "per-point harmonic fit of a movie");
    std::string movie_dir, fit_solution;
    std::vector<double> freqs;
    bool sine = false, no_csv = false;
    fit->add_option("movie", movie_dir, "movie directory")->required();
    fit->add_option("--frequencies", freqs, "three frequencies")->delimiter(',');
    fit->add_option("--solution", fit_solution, "take the frequencies from a solution.json");
    fit->add_flag("--sine", sine, "add sine columns to the basis");
    fit->add_flag("--no-csv", no_csv, "skip modemap.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("Usage", e.what(), 1);
    }

    try {
        cli::RunConfig cfg = config_path.empty() ? cli::RunConfig{} : cli::load_config(config_path);
        if (seed) cfg.set_seed(*seed);
        if (!out_dir.empty()) cfg.output_dir = out_dir;

        if (sim->parsed()) return cmd_simulate(cfg, config_path);
        if (ext->parsed()) return cmd_extract(cfg, detectors, method, n_components);
        if (cum->parsed()) return cmd_cumulants(cfg, components, z, cum_solution, round);
        if (fit->parsed()) return cmd_fit(cfg, movie_dir, freqs, fit_solution, sine, !no_csv);
        return fail("Usage", "no subcommand", 1);
    } catch (const Error& e) {
        return fail(to_string(e.code()), e.what(), exit_code(e.code()));
    } catch (const std::exception& e) {
        return fail("Internal", e.what(), 3);
    }
}
