#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qitsa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or argument contract violated by a caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input file could not be parsed. line() is 1-based, 0 when not line-specific.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace qitsa
