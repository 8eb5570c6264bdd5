#pragma once

#include <string_view>

namespace attnhtr::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

// Process-wide threshold; messages below it are dropped. Defaults to Info,
// or to the value of ATTNHTR_LOG (debug|info|warn|error|off) when set.
void set_level(Level level);
Level level();

void write(Level level, std::string_view message);
inline void debug(std::string_view m) { write(Level::Debug, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }

}  // namespace attnhtr::log
