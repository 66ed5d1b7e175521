#include "bp/logging.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace bp::logging {

bool parse_level(std::string_view name, spdlog::level::level_enum& out) {
    if (name == "error") {
        out = spdlog::level::err;
    } else if (name == "info") {
        out = spdlog::level::info;
    } else if (name == "debug") {
        out = spdlog::level::debug;
    } else {
        return false;
    }
    return true;
}

void init_from_env() {
    auto logger = spdlog::stderr_color_mt("bp");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("BP_LOG_LEVEL")) {
        if (!parse_level(env, level)) {
            spdlog::warn("ignoring unknown BP_LOG_LEVEL '{}'", env);
        }
    }
    spdlog::set_level(level);
}

}  // namespace bp::logging
