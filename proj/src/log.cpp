#include "cyclecap/log.hpp"

#include <atomic>
#include <iostream>

namespace cyclecap {

namespace {
std::atomic<bool> g_quiet{false};
}

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

void info(const std::string& message) {
  if (!g_quiet) std::cerr << message << '\n';
}

void set_quiet(bool quiet) { g_quiet = quiet; }

}  // namespace cyclecap
