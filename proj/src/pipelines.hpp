#pragma once

#include <string>

#include <json.hpp>

#include "types.hpp"

namespace happymap {

// Runs one named command against a parsed dataset. config is the command's
// JSON block (unknown keys rejected); holdout is an optional evaluation set.
// The bundle carries every artifact the caller may want to write: chain or
// interval JSON, run-report JSON/CSV, metrics JSON/CSV and warnings.
nlohmann::json run_command(const std::string& command, const nlohmann::json& config,
                           const Dataset& data, const Dataset* holdout);

} // namespace happymap
