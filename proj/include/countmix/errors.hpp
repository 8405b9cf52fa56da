#pragma once

#include <stdexcept>
#include <string>

namespace countmix {

// Everything thrown by the library derives from Error. InputError covers bad
// files, flags and shapes (CLI exit code 2); ComputeError covers fits that
// cannot be carried out (exit code 3).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : Error {
  using Error::Error;
};

struct ComputeError : Error {
  using Error::Error;
};

struct SchemaError : InputError {
  using InputError::InputError;
};

struct ParseError : InputError {
  ParseError(const std::string& what, std::size_t row)
      : InputError(what + " (row " + std::to_string(row) + ")"), row(row) {}
  std::size_t row;
};

struct EmptyDataError : InputError {
  using InputError::InputError;
};

struct DimensionError : InputError {
  using InputError::InputError;
};

struct SpecError : InputError {
  using InputError::InputError;
};

struct DomainError : ComputeError {
  using ComputeError::ComputeError;
};

struct OverflowError : ComputeError {
  OverflowError(const std::string& what, std::size_t row)
      : ComputeError(what + " (row " + std::to_string(row) + ")"), row(row) {}
  std::size_t row;
};

struct SingularDesignError : ComputeError {
  using ComputeError::ComputeError;
};

struct CollapseError : ComputeError {
  using ComputeError::ComputeError;
};

struct InfoMatrixError : ComputeError {
  using ComputeError::ComputeError;
};

struct NoScoreError : ComputeError {
  using ComputeError::ComputeError;
};

struct SweepError : ComputeError {
  using ComputeError::ComputeError;
};

}  // namespace countmix
