#pragma once

#include <stdexcept>
#include <string>

namespace bgaug {

// Error taxonomy, mapped onto process exit codes by the CLI:
//   ConfigError    -> 2  (bad config file, unknown keys, invalid values)
//   NumericError   -> 3  (non-finite loss/activations, divergence)
//   IntegrityError -> 4  (corrupt or mismatched dataset / cache files)
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IntegrityError : std::runtime_error {
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bgaug
