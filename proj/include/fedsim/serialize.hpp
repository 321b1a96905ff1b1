#pragma once

#include <filesystem>

#include <json.hpp>

#include "fedsim/param_set.hpp"

namespace fedsim {

/// JSON layout: {"layers": [{"layer_id", "kind", "shape", "values"}...],
/// "checksum": "0x..."}. Values round-trip bit-exactly (shortest
/// representation that reparses to the same double).
nlohmann::json to_json(const ParameterSet& p);
ParameterSet parameter_set_from_json(const nlohmann::json& j);

void save_parameter_set(const std::filesystem::path& path, const ParameterSet& p);
ParameterSet load_parameter_set(const std::filesystem::path& path);

}  // namespace fedsim
