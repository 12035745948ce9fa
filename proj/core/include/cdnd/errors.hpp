#pragma once

#include <stdexcept>
#include <string>

namespace cdnd {

/// I/O or parse failure; message carries the offending path (and line, when known).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure (non-finite value, non-converging iteration); message carries
/// the offending quantity so the failing step can be reconstructed.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cdnd
