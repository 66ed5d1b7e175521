#ifndef BP_LOGGING_HPP_
#define BP_LOGGING_HPP_

#include <string_view>

#include <spdlog/spdlog.h>

namespace bp::logging {

/// Applies BP_LOG_LEVEL (error | info | debug); unset means info. Logs go to stderr.
void init_from_env();

/// Parses a level name; returns false for anything outside error/info/debug.
bool parse_level(std::string_view name, spdlog::level::level_enum& out);

}  // namespace bp::logging

#endif  // BP_LOGGING_HPP_
