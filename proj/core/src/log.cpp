#include "attnhtr/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace attnhtr::log {

namespace {

Level initial_level() {
  const char* env = std::getenv("ATTNHTR_LOG");
  if (env == nullptr) return Level::Info;
  const std::string v(env);
  if (v == "debug") return Level::Debug;
  if (v == "warn") return Level::Warn;
  if (v == "error") return Level::Error;
  if (v == "off") return Level::Off;
  return Level::Info;
}

std::atomic<Level>& threshold() {
  static std::atomic<Level> level{initial_level()};
  return level;
}

const char* tag(Level level) {
  switch (level) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    case Level::Off: break;
  }
  return "";
}

}  // namespace

void set_level(Level level) { threshold().store(level); }
Level level() { return threshold().load(); }

void write(Level lvl, std::string_view message) {
  if (lvl < threshold().load() || lvl == Level::Off) return;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::clog << "[attnhtr " << tag(lvl) << "] " << message << '\n';
}

}  // namespace attnhtr::log
