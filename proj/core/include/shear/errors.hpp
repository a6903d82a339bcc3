#pragma once

#include <stdexcept>
#include <string>

namespace shear {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or missing configuration (files, keys, descriptor fields).
struct ConfigError : Error {
  using Error::Error;
};

// A caller violated an API precondition (length mismatch, masked bit cleared).
struct ContractError : Error {
  using Error::Error;
};

// Stored data is inconsistent with its own metadata (spans, blob sizes).
struct IntegrityError : Error {
  using Error::Error;
};

// A numeric computation produced a non-finite value.
struct NumericError : Error {
  using Error::Error;
};

// The response cache could not be read or written.
struct StorageError : Error {
  using Error::Error;
};

struct BackendError : Error {
  enum class Kind { Unavailable, Rejected, Timeout };
  Kind kind;
  int http_status;  // meaningful for Rejected only

  BackendError(Kind k, const std::string& msg, int status = 0)
      : Error(msg), kind(k), http_status(status) {}
};

// Every prompt in a training batch failed; the step cannot proceed.
struct StepError : Error {
  using Error::Error;
};

}  // namespace shear
