#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace dgslow {

// Base of every error the library throws. Callers that only care about
// "something in dgslow failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyUtterance : public Error {
 public:
  EmptyUtterance() : Error("utterance is empty after tokenization") {}
  explicit EmptyUtterance(const std::string& what) : Error(what) {}
};

class EmptyReference : public Error {
 public:
  EmptyReference() : Error("reference is empty after tokenization") {}
};

// Errors tied to a line of an input file carry the 1-based line number.
class LineError : public Error {
 public:
  LineError(const std::string& kind, std::size_t line, const std::string& detail)
      : Error(kind + " at line " + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ParseError : public LineError {
 public:
  ParseError(std::size_t line, const std::string& detail) : LineError("parse error", line, detail) {}
};

class SchemaError : public LineError {
 public:
  SchemaError(std::size_t line, const std::string& detail) : LineError("schema error", line, detail) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IOError : public Error {
 public:
  using Error::Error;
};

class ModelNotReady : public Error {
 public:
  ModelNotReady() : Error("victim model has no trained weights") {}
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConnectionError : public Error {
 public:
  ConnectionError(const std::string& detail, int retries)
      : Error(detail + " (after " + std::to_string(retries) + " retries)"), retries_(retries) {}
  int retries() const noexcept { return retries_; }

 private:
  int retries_;
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(std::string version)
      : Error("unsupported protocol version '" + version + "'"), version_(std::move(version)) {}
  ProtocolError(std::string version, const std::string& detail)
      : Error("protocol error (version '" + version + "'): " + detail), version_(std::move(version)) {}
  const std::string& version() const noexcept { return version_; }

 private:
  std::string version_;
};

class CheckpointVersionError : public Error {
 public:
  using Error::Error;
};

class EmptyReport : public Error {
 public:
  EmptyReport() : Error("cannot aggregate an empty set of attack records") {}
};

class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgslow
