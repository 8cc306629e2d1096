#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace cim {

/// Shortest text that round-trips to the same double; "NA" for NaN.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace cim
