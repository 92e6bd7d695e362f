#ifndef CDS_ERRORS_HPP
#define CDS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cds {

/// Raised for bad user input: malformed files, inconsistent shapes, invalid
/// hyperparameters. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ConfigMismatchError : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpointError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Misuse of stateful objects, e.g. backward on an empty tape.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace cds

#endif  // CDS_ERRORS_HPP
