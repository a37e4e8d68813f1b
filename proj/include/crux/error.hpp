#pragma once

#include <stdexcept>
#include <string>

namespace crux {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or record.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    explicit ParseError(const std::string& what) : Error(what) {}

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_ = 0;
};

/// A domain invariant does not hold.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Caller misuse: unbound placeholder, bad argument, bad configuration.
class UsageError : public Error {
  public:
    using Error::Error;
};

/// The model endpoint could not be reached (after retries, if any).
class TransportError : public Error {
  public:
    TransportError(const std::string& what, bool transient = true)
        : Error(what), transient_(transient) {}

    bool transient() const noexcept { return transient_; }

  private:
    bool transient_;
};

/// A metric is undefined for the given input (e.g. zero answerable questions).
class UndefinedMetric : public Error {
  public:
    using Error::Error;
};

}  // namespace crux
