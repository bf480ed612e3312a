#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sieves {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input or configuration that violates a documented invariant. CLI exit code 2.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::string field, const std::string& reason)
      : Error(field + ": " + reason), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A line of a JSONL stream that could not be decoded or validated.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& field, const std::string& reason)
      : ValidationError("line " + std::to_string(line) + ": " + field, reason),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Zero-area box where positive area is required (bad annotation).
class DegenerateBoxError : public Error {
 public:
  using Error::Error;
};

// Judge or annotator endpoint could not be reached after all retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace sieves
