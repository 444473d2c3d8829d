#pragma once

#include <stdexcept>
#include <string>

namespace connhs {

// Malformed input: bundle schema violations, bad shapes, invalid configs.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace connhs
