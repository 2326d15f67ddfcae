#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace enkfsq::csv {

// Shortest representation that round-trips, so written files are
// byte-stable and re-readable without loss.
inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace enkfsq::csv
