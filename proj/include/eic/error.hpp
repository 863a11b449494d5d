#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace eic {

/// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
  internal = 1,
  config = 2,
  data = 3,
  model = 4,
  numeric = 5,
  transport = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Invalid dataset content. `line` is 1-based, 0 when not tied to a line.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0, std::string field = {})
      : Error(ErrorKind::data, line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line),
        field_(std::move(field)) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what) : Error(ErrorKind::model, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(ErrorKind::transport, what + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Carries every violation found, not only the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(ErrorKind::config, join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

}  // namespace eic
