#pragma once

#include <stdexcept>
#include <string>

namespace geostat {

// Base for every error raised by the library. The CLI maps these onto exit
// codes: InputError -> 2, NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ZeroDiagonal : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InvalidParams : public InputError {
 public:
  using InputError::InputError;
};

class DuplicateLocation : public InputError {
 public:
  using InputError::InputError;
};

class LengthMismatch : public InputError {
 public:
  using InputError::InputError;
};

class InsufficientDraws : public InputError {
 public:
  using InputError::InputError;
};

class UnsupportedFamily : public InputError {
 public:
  using InputError::InputError;
};

class TargetInReference : public InputError {
 public:
  using InputError::InputError;
};

// A numerical failure inside an MCMC chain, tagged with the iteration.
class ChainError : public NumericalError {
 public:
  ChainError(long iteration, const std::string& what)
      : NumericalError("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace geostat
