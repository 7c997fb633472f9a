#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chaffwin {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: a stream/output/clean file, a CLF line, a hex string.
// line() is 1-based when the error came from a line-oriented file, else 0.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Invalid pipeline configuration (duplicate agent ids, mixed epochs, bad config field).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace chaffwin
