#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gvi {

/// Vector lengths that must agree do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A spec, config file, or CLI flag is malformed or out of range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The optimizer produced a non-finite objective or gradient.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a) +
                         " does not match " + std::to_string(b));
  }
}

}  // namespace gvi
