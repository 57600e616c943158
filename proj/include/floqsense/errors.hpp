#ifndef FLOQSENSE_ERRORS_HPP
#define FLOQSENSE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace floqsense {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter is outside its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Hilbert space too large for the dense engine.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// The model is valid but not handled by the requested engine.
class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

/// Time integration lost unitarity or failed to converge.
class IntegratorError : public Error {
 public:
  using Error::Error;
};

/// A protocol precondition that cannot be downgraded to a warning.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

/// The estimator has no sensitivity at the chosen operating point.
class UnidentifiableSignal : public Error {
 public:
  using Error::Error;
};

/// Internal invariant failure (a bug, not a user error).
class InternalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ParameterError(message);
}

}  // namespace floqsense

#endif
