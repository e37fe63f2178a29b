#pragma once

#include <string>

namespace cyclecap {

// Diagnostics go to stderr so stdout stays machine-readable.
void warn(const std::string& message);
void info(const std::string& message);
void set_quiet(bool quiet);

}  // namespace cyclecap
