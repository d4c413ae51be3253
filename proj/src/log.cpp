#include "gpusim/log.hpp"

#include <cstdlib>
#include <cstring>

namespace gpusim::log {

namespace {

Level parse_env() {
    const char* env = std::getenv("SIM_LOG_LEVEL");
    if (env == nullptr) {
        return Level::Warn;
    }
    if (std::strcmp(env, "error") == 0) return Level::Error;
    if (std::strcmp(env, "warn") == 0)  return Level::Warn;
    if (std::strcmp(env, "info") == 0)  return Level::Info;
    if (std::strcmp(env, "debug") == 0) return Level::Debug;
    return Level::Warn;
}

Level g_level = parse_env();

const char* tag(Level lv) {
    switch (lv) {
        case Level::Error: return "error";
        case Level::Warn:  return "warn";
        case Level::Info:  return "info";
        case Level::Debug: return "debug";
    }
    return "?";
}

} // namespace

Level level() { return g_level; }
void set_level(Level lv) { g_level = lv; }

void write(Level lv, const std::string& msg) {
    if (static_cast<int>(lv) > static_cast<int>(g_level)) {
        return;
    }
    std::fprintf(stderr, "[sim:%s] %s\n", tag(lv), msg.c_str());
}

} // namespace gpusim::log
