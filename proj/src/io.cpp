#include "modesep/io.hpp"

#include <algorithm>
#include <fstream>

#include "modesep/error.hpp"

namespace modesep::io {

using json = nlohmann::json;

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

json window_json(const Window& w, const TimeGrid& grid) {
    return {{"start_index", w.begin}, {"sample_count", w.size()}, {"dt", grid.dt()}};
}

}  // namespace

json solution_to_json(const UnmixingSolution& solution) {
    const TimeGrid& grid = solution.whitening_used.grid;
    json doc;
    doc["method"] = solution.method;
    doc["time_grid"] = {{"t0", grid.t0()}, {"dt", grid.dt()}, {"n_samples", grid.size()}};
    doc["channel_count"] = solution.whitening_used.channel_count();
    doc["config"] = {{"z_grid", solution.config.z_grid.values()},
                     {"periods_per_window", solution.config.periods_per_window},
                     {"max_outer_iterations", solution.config.max_outer_iterations},
                     {"freq_rel_tol", solution.config.freq_rel_tol},
                     {"newton_max_steps", solution.config.newton_max_steps},
                     {"newton_grad_tol", solution.config.newton_grad_tol},
                     {"restarts", solution.config.restarts},
                     {"rng_seed", solution.config.rng_seed}};
    json comps = json::array();
    for (const auto& c : solution.components) {
        json j;
        j["status"] = {{"ok", c.status.ok}};
        if (!c.status.ok) {
            j["status"]["code"] = std::string(to_string(c.status.code));
            j["status"]["message"] = c.status.message;
        }
        if (c.direction.size() > 0) {
            j["direction"] = to_std(c.direction);
            j["unmixing_row"] = to_std(c.unmixing_row);
            j["means"] = to_std(c.means);
            j["window"] = window_json(c.window, grid);
        }
        j["frequency"] = c.frequency;
        j["phase"] = c.phase;
        j["loss"] = c.loss;
        if (c.negentropy) j["negentropy"] = *c.negentropy;
        j["frequency_history"] = c.frequency_history;
        json rounds = json::array();
        for (const auto& r : c.rounds) {
            rounds.push_back({{"window", window_json(r.window, grid)},
                              {"direction", to_std(r.direction)},
                              {"unmixing_row", to_std(r.unmixing_row)},
                              {"frequency", r.frequency},
                              {"phase", r.phase},
                              {"loss", r.loss}});
        }
        j["rounds"] = rounds;
        comps.push_back(j);
    }
    doc["components"] = comps;
    return doc;
}

Ensemble components_ensemble(const UnmixingSolution& solution, std::optional<std::size_t> round) {
    std::vector<std::vector<double>> channels;
    for (const auto& c : solution.components) {
        if (!c.status.ok || c.signal.empty()) continue;
        if (round && !c.rounds.empty()) {
            channels.push_back(c.rounds[std::min(*round, c.rounds.size() - 1)].signal);
        } else {
            channels.push_back(c.signal);
        }
    }
    if (channels.empty()) throw Error(ErrorCode::NoConvergence, "solution has no usable component");
    return Ensemble(solution.whitening_used.grid, channels);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

void write_solution_json(const UnmixingSolution& solution, const std::string& path) {
    write_text(path, solution_to_json(solution).dump(2) + "\n");
}

void write_components_csv(const UnmixingSolution& solution, const std::string& path,
                          std::optional<std::size_t> round) {
    write_ensemble_csv(path, components_ensemble(solution, round), "s");
}

}  // namespace modesep::io
