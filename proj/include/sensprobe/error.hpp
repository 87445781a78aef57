#ifndef SENSPROBE_ERROR_HPP
#define SENSPROBE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace sensprobe {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix shapes that do not line up, or two models with different
/// architectures.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed files, configs or specs.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// The solver could not be started, crashed, or printed something we
/// cannot make sense of.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::string output = {})
      : Error(what), output_(std::move(output)) {}
  const std::string& output() const noexcept { return output_; }

 private:
  std::string output_;
};

/// A model value the rational parser does not handle (e.g. root-obj).
class UnsupportedValue : public Error {
 public:
  using Error::Error;
};

}  // namespace sensprobe

#endif  // SENSPROBE_ERROR_HPP
