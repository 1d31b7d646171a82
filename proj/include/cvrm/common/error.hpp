// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvrm {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A record, file row or config value broke its schema.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, std::string reason, std::size_t line = 0)
      : Error(format(field, reason, line)),
        field_(std::move(field)),
        reason_(std::move(reason)),
        line_(line) {}

  const std::string& field() const { return field_; }
  const std::string& reason() const { return reason_; }
  /// 1-based line/row number, 0 when not tied to a file position.
  std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& field, const std::string& reason,
                            std::size_t line) {
    std::string msg;
    if (line > 0) msg += "line " + std::to_string(line) + ": ";
    msg += field.empty() ? reason : "field '" + field + "': " + reason;
    return msg;
  }

  std::string field_;
  std::string reason_;
  std::size_t line_;
};

/// Malformed input that could not be parsed at all (bad JSON, bad number).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or usage; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvrm
