#pragma once

#include <stdexcept>
#include <string>

namespace infrel {

// Invalid or malformed input data (bad edge list, domain violation, bad CSV).
// The CLI maps DataError to exit code 2, everything else unexpected to 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace infrel
