#ifndef KNG_ERRORS_HPP
#define KNG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kng {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed an argument that violates an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Data violates a type invariant (non-finite values, bad labels, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents: bad magic, version, checksum, truncation.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Operation invoked on an object in the wrong state (e.g. uninitialized model).
class StateError : public Error {
public:
    using Error::Error;
};

/// Covariance factorization failed even after regularization escalation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A metric is undefined for the given input (single class, no anomalous pixels).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

} // namespace kng

#endif // KNG_ERRORS_HPP
