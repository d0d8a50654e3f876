#pragma once

#include <stdexcept>
#include <string>

namespace trgame {

/// Base class for every library error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimMismatch : Error {
  using Error::Error;
};

struct EmptySetError : Error {
  using Error::Error;
};

struct EmptyModelList : Error {
  using Error::Error;
};

struct EmptyHistory : Error {
  using Error::Error;
};

struct NonDifferentiableLoss : Error {
  using Error::Error;
};

struct DegenerateEstimate : Error {
  using Error::Error;
};

struct ZeroInput : Error {
  using Error::Error;
};

struct BadParams : Error {
  using Error::Error;
};

// Non-finite values where finite arithmetic is required (diverged training,
// overflowing activations, ...). CLI maps this to exit code 4.
struct NumericError : Error {
  using Error::Error;
};

// The defender-side adaptation was handed information the protocol forbids.
// CLI maps this to exit code 3.
struct ProtocolViolation : Error {
  using Error::Error;
};

// Configuration parse / validation problems. CLI maps this to exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed data files (IDX parsing and friends).
struct DataFormatError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace trgame
