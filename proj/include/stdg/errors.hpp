#pragma once

#include <stdexcept>
#include <string>

namespace stdg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
public:
  using Error::Error;
};

class TopologyError : public Error {
public:
  using Error::Error;
};

class GeometryError : public Error {
public:
  using Error::Error;
};

class PairingError : public Error {
public:
  using Error::Error;
};

class AdjacencyError : public Error {
public:
  using Error::Error;
};

class ConditioningError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Non-finite values encountered inside an iterative solver.
class NumericalBreakdown : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string &source, int line, const std::string &what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  [[nodiscard]] int line() const noexcept { return line_; }

private:
  int line_;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace stdg
