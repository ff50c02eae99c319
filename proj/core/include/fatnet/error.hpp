#pragma once

#include <stdexcept>
#include <string>

namespace fatnet {

/// Thrown on contract violations: malformed inputs, shape mismatches,
/// out-of-domain arguments. The message names the offending operation.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace fatnet
