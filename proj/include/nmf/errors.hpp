#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nmf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or configuration violation (bad spec, bad bounds, shape mismatch).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Exact oracles whose state space grows as 2^n refuse large inputs.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedLaw : public Error {
 public:
  using Error::Error;
};

/// Cascade data violating the simple point-process assumptions.
class DataError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// An integrated state became non-finite.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(double time)
      : Error("non-finite state at t = " + std::to_string(time)), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace nmf
