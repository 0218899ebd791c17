#pragma once

#include <stdexcept>
#include <string>

namespace vogue {

// Root of every error the library throws. Callers that only care about
// "something in the trainer went wrong" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not satisfy a primitive's rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced, log of a non-positive value, non-finite ratio, ...
class NumericError : public Error {
 public:
  using Error::Error;
};

// Precondition violated by the caller (bad probability, unknown family, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A tape was asked to run backward a second time.
class ReuseError : public Error {
 public:
  using Error::Error;
};

// Finite-difference oracle could not be trusted (f not deterministic).
class OracleError : public Error {
 public:
  using Error::Error;
};

// Configuration rejected before any compute; message names the field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint / suite / metrics file could not be read back.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace vogue
