#pragma once

#include <functional>
#include <string>

namespace archsim {

using WarningHandler = std::function<void(const std::string&)>;

/// Reports a recoverable condition (degenerate attack budget, constant
/// regression target, ...). Goes to stderr unless a handler is installed.
void warn(const std::string& message);

/// Installs a handler and returns the previous one. Thread-safe.
WarningHandler set_warning_handler(WarningHandler handler);

}  // namespace archsim
