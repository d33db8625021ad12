#pragma once

#include <stdexcept>
#include <string>

namespace evinc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes (tensor dims, tile grids, weight dims) do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or text input. The message names the line or byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

class MissingWeightError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. a step before any dense pass).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace evinc
