#pragma once

#include <stdexcept>
#include <string>

namespace persona {

// Runtime failure: I/O, numerical blow-up, anything that is not the caller's fault.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input or configuration rejected before any work is done.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace persona
