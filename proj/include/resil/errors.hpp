#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace resil {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UndeclaredVariable : public Error {
 public:
  explicit UndeclaredVariable(std::string name)
      : Error("undeclared variable '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Runtime evaluation failure (division by zero, missing binding).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent model data.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// No grid point satisfied the region predicate.
class EmptyRegion : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// The simulated state left its box by more than 10% or became non-finite.
class NonFiniteState : public Error {
 public:
  using Error::Error;
};

/// A fault schedule violates the dwell-time constraints of its index.
class ScheduleError : public Error {
 public:
  using Error::Error;
};

}  // namespace resil
