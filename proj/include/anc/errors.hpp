#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace anc {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  NumericError(const std::string& msg, std::size_t block)
      : std::runtime_error(msg + " (block " + std::to_string(block) + ")"),
        block_index(block) {}
  std::size_t block_index;
};

struct TuningError : std::runtime_error {
  explicit TuningError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace anc
