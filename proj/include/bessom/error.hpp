#pragma once

#include <stdexcept>
#include <string>

namespace bessom {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text: CSV, JSON documents, dates, LLM replies.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A precondition or domain invariant does not hold.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Persisted data written by an incompatible schema version.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Remote provider (LLM or embedding endpoint) failed after all retries.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempt" + (attempts == 1 ? "" : "s") + ")"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

}  // namespace bessom
