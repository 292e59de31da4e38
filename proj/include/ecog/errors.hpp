#pragma once

#include <stdexcept>
#include <string>

namespace ecog {

// Exit-code classes used by the CLI: config errors -> 1, data errors -> 2,
// numeric failures -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ecog
