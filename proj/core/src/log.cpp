#include "archsim/log.hpp"

#include <iostream>
#include <mutex>

namespace archsim {

namespace {

std::mutex& handler_mutex() {
  static std::mutex mu;
  return mu;
}

WarningHandler& current_handler() {
  static WarningHandler h;
  return h;
}

}  // namespace

void warn(const std::string& message) {
  std::lock_guard lock(handler_mutex());
  if (current_handler()) {
    current_handler()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  std::swap(handler, current_handler());
  return handler;
}

}  // namespace archsim
