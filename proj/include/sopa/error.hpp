#pragma once

#include <stdexcept>
#include <string>

namespace sopa {

// Single exception type for every recoverable failure in the library:
// malformed input files, bad configuration, numerical faults.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sopa
