#pragma once

#include <stdexcept>
#include <string>

namespace sticky {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid construction arguments or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class RoutingError : public Error {
 public:
  using Error::Error;
};

// Every node is Removed (or the ring is empty); surfaced to clients as "no capacity".
class NoCapacityError : public RoutingError {
 public:
  NoCapacityError() : RoutingError("no capacity: no routable nodes") {}
};

class CacheError : public Error {
 public:
  using Error::Error;
};

// Text input that failed to parse. line/column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0, int column = 0)
      : Error(what), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// A conservation or causality law failed while building a report.
class AssemblyError : public Error {
 public:
  AssemblyError(const std::string& law, const std::string& detail)
      : Error("conservation violation [" + law + "]: " + detail), law_(law) {}
  const std::string& law() const { return law_; }

 private:
  std::string law_;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class PortInUseError : public Error {
 public:
  using Error::Error;
};

}  // namespace sticky
