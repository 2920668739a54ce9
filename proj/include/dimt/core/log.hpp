#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace dimt {

inline std::atomic<long>& warning_count() {
  static std::atomic<long> n{0};
  return n;
}

inline std::atomic<bool>& quiet_warnings() {
  static std::atomic<bool> q{false};
  return q;
}

inline void warn(std::string_view msg) {
  ++warning_count();
  if (!quiet_warnings()) std::cerr << "warning: " << msg << '\n';
}

}  // namespace dimt
