#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pricesense {

// Bad invocation or configuration. CLI exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data that cannot be read or does not satisfy the data model. Exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// A statistic is undefined on the supplied data (e.g. one settlement class). Exit code 4.
class DegenerateStatisticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace pricesense
