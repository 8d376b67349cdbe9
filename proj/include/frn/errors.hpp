#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace frn {

// Base for every error raised by the engine. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Binary container errors (feature files, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  TruncatedError(const std::string& what, std::size_t record)
      : FormatError(what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

class DuplicateIdError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeHeaderError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ManifestError : public Error {
 public:
  ManifestError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace frn
