#pragma once

#include <cstdio>
#include <string>

namespace gpusim::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Level comes from SIM_LOG_LEVEL (error|warn|info|debug); defaults to warn.
Level level();
void set_level(Level lv);

void write(Level lv, const std::string& msg);

inline void error(const std::string& msg) { write(Level::Error, msg); }
inline void warn(const std::string& msg)  { write(Level::Warn, msg); }
inline void info(const std::string& msg)  { write(Level::Info, msg); }
inline void debug(const std::string& msg) { write(Level::Debug, msg); }

} // namespace gpusim::log
