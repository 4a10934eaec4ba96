#ifndef CTFORMER_UTIL_FORMAT_H_
#define CTFORMER_UTIL_FORMAT_H_

#include <charconv>
#include <cmath>
#include <string>

namespace ctformer::util {

// Shortest decimal form that parses back to the same double; "inf", "-inf"
// and "nan" for non-finite values.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace ctformer::util

#endif  // CTFORMER_UTIL_FORMAT_H_
