#ifndef BP_SCENARIO_CONFIG_LOADER_HPP_
#define BP_SCENARIO_CONFIG_LOADER_HPP_

#include <filesystem>
#include <string>
#include <string_view>

#include "bp/config.hpp"

namespace bp::scenario {

/**
 * @brief Reads and validates a YAML scenario file.
 *
 * Every key is optional and falls back to the documented default; unknown
 * keys are rejected. Throws ParseError (with line) for malformed YAML and
 * ValidationError (naming the dotted field path) for bad values.
 */
ScenarioConfig load_config(const std::filesystem::path& path);

/// Same as load_config on in-memory text.
ScenarioConfig parse_config(std::string_view text);

/// Human-readable schema with defaults, printed by --help.
std::string config_schema();

}  // namespace bp::scenario

#endif  // BP_SCENARIO_CONFIG_LOADER_HPP_
