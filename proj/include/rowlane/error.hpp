#pragma once

#include <stdexcept>
#include <string>

namespace rowlane {

// Precondition violated by the caller (bad dims, out-of-range index, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Network spec and weight bundle disagree, or the spec itself is inconsistent.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed binary payload (bad magic, version, truncated data).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input. Carries the 1-based line number of the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Statistic undefined for the given data (e.g. zero variance).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Not enough distinct samples to determine a fit.
class Underdetermined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace rowlane
