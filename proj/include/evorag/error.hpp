#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evorag {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's documented precondition.
class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

// Transport failure after retries were exhausted.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

// The scripted backend had no entry for a request. Indicates a broken fixture.
class ScriptMiss : public Error {
 public:
  using Error::Error;
};

// Two consecutive responses failed to decode against the requested schema.
class MalformedStructuredOutput : public Error {
 public:
  using Error::Error;
};

class StepTimeout : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  IngestError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace evorag
