// SPDX-License-Identifier: Apache-2.0
//
// Error types shared by every module. The CLI maps each category onto a
// process exit code.

#pragma once

#include <stdexcept>
#include <string>

namespace sgmt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input data violates a structural rule (schema, graph kind, shapes).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A non-finite value showed up in a numeric path.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgmt
