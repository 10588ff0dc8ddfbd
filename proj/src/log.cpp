#include "graphalp/log.hpp"

#include <atomic>
#include <mutex>

namespace graphalp::log {
namespace {

std::atomic<Level> g_threshold{Level::kWarn};
std::mutex g_mutex;

constexpr std::string_view tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    case Level::kOff: break;
  }
  return "";
}

}  // namespace

Level threshold() { return g_threshold.load(std::memory_order_relaxed); }

void set_threshold(Level level) { g_threshold.store(level, std::memory_order_relaxed); }

void write(Level level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  std::cerr << "[graphalp " << tag(level) << "] " << message << '\n';
}

}  // namespace graphalp::log
