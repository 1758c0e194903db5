#include "cmr/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <mutex>

namespace cmr {
namespace {

LogLevel parse_env_level() {
    const char* env = std::getenv("CMR_LOG_LEVEL");
    if (env == nullptr) return LogLevel::warn;
    const std::string value(env);
    if (value == "error") return LogLevel::error;
    if (value == "warn") return LogLevel::warn;
    if (value == "info") return LogLevel::info;
    if (value == "debug") return LogLevel::debug;
    std::fprintf(stderr, "[warn] unrecognized CMR_LOG_LEVEL '%s', using 'warn'\n", env);
    return LogLevel::warn;
}

LogLevel& level_ref() {
    static LogLevel level = parse_env_level();
    return level;
}

const char* level_tag(LogLevel level) {
    switch (level) {
        case LogLevel::error: return "error";
        case LogLevel::warn: return "warn";
        case LogLevel::info: return "info";
        case LogLevel::debug: return "debug";
    }
    return "?";
}

std::mutex log_mutex;

}  // namespace

LogLevel log_level() { return level_ref(); }

void set_log_level(LogLevel level) { level_ref() = level; }

void log_message(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    std::fprintf(stderr, "[%s] %s\n", level_tag(level), msg.c_str());
}

}  // namespace cmr
