#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace notegen {

// Every failure the library raises derives from Error. The CLI maps the
// concrete type onto an exit code (see exit_code_for).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or ambiguous column mapping, bad header.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A malformed data row in strict parse mode.
class RowParseError : public Error {
 public:
  RowParseError(std::size_t row, const std::string& reason)
      : Error("row " + std::to_string(row) + ": " + reason), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Violated operation precondition (e.g. summarizing zero chunks).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Prompt template rendering failed; slot() names the offending slot.
class RenderError : public Error {
 public:
  explicit RenderError(const std::string& slot)
      : Error("missing or empty prompt slot: " + slot), slot_(slot) {}
  const std::string& slot() const noexcept { return slot_; }

 private:
  std::string slot_;
};

// Rendered prompt plus requested completion would not fit the context.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Connection failure, timeout, or retryable status after all retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Non-retryable status or malformed response body.
class ProtocolError : public Error {
 public:
  ProtocolError(int status, const std::string& what)
      : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

// Mock backend has no script entry for the request.
class ScriptingError : public Error {
 public:
  using Error::Error;
};

// Collects non-fatal warnings from an operation. Not synchronized; each
// concurrent caller owns its own instance.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace notegen
