#pragma once

// Export of unmixing solutions: a JSON document and `t,s1,...,sN` CSVs.

#include <optional>
#include <string>

#include "json.hpp"
#include "modesep/sica.hpp"

namespace modesep::io {

nlohmann::json solution_to_json(const UnmixingSolution& solution);

/// Ensemble of component signals on the solution's time grid. With `round`
/// set, takes rounds[round] of each component (components lacking that round
/// fall back to their last one); otherwise the final signals. Failed
/// components are skipped.
Ensemble components_ensemble(const UnmixingSolution& solution, std::optional<std::size_t> round = std::nullopt);

void write_solution_json(const UnmixingSolution& solution, const std::string& path);
void write_components_csv(const UnmixingSolution& solution, const std::string& path,
                          std::optional<std::size_t> round = std::nullopt);

/// Writes `text` to `path`, throwing IoError on failure.
void write_text(const std::string& path, const std::string& text);

}  // namespace modesep::io
