#pragma once

// The CLI's single JSON config document.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "modesep/baseline.hpp"
#include "modesep/becsim.hpp"
#include "modesep/sica.hpp"

namespace modesep::cli {

struct RunConfig {
    becsim::TrapParams trap;
    becsim::ModeSpec modes;
    becsim::NoiseSpec noise;
    std::optional<double> half_width;  // default 1.3 TF radii
    std::size_t n_points = 101;
    TimeGrid time_grid = becsim::default_time_grid();
    SicaConfig sica;
    baseline::NegentropyConfig ica;
    std::optional<std::vector<std::pair<double, double>>> detectors;
    std::string output_dir = "out";

    becsim::SpatialGrid spatial_grid() const;
    std::vector<std::pair<double, double>> detector_points() const;
    /// Sets every rng seed (noise, sica, ica).
    void set_seed(std::uint64_t seed);
};

/// Missing keys keep their defaults; unknown keys and invalid values throw
/// ConfigInvalid.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// Fully expanded form, every key present.
nlohmann::json config_to_json(const RunConfig& config);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace modesep::cli
