#pragma once

#include <stdexcept>
#include <string>

namespace istd {

// Bad shapes, bad values, bad configuration. The CLI maps this to exit code 1.
struct ValueError : std::runtime_error {
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and serialization failures. The CLI maps this to exit code 2.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace istd
