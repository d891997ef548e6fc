#pragma once

#include <stdexcept>
#include <string>

namespace blueprint {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A document (blueprint, CSV, JSON lines, config) could not be read.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A well-formed value violated a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Backend output that cannot be mapped onto any offered candidate.
class UnresolvableOutput : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or incomplete run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure talking to a classifier service.
/// `status` is the HTTP status, or 0 when no response was received.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status, bool retryable)
      : Error(what), status_(status), retryable_(retryable) {}

  int status() const noexcept { return status_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int status_;
  bool retryable_;
};

class AuthError : public TransportError {
 public:
  AuthError(const std::string& what, int status)
      : TransportError(what, status, false) {}
};

}  // namespace blueprint
