#pragma once

#include <stdexcept>
#include <string>

namespace cgbn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument: unknown node, wrong kind, out-of-range state.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// The network graph is not usable (cycle, dangling parent).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A variable is used as discrete in one place and continuous in another.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Division of a nonzero configuration by a void (zero) one.
class UndefinedDivision : public Error {
 public:
  using Error::Error;
};

/// A precision block could not be factorized even after diagonal repair.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The evidence has zero likelihood under the model.
class InconsistentEvidence : public Error {
 public:
  using Error::Error;
};

/// Too many boundary configurations to enumerate.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Artifacts that do not belong together (stale compiled model, bad config).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A file or document that cannot be read or does not follow its schema.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace cgbn
