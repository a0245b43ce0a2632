#pragma once

#include <stdexcept>
#include <string>

namespace disphom {

// Base of everything the library throws on purpose. The CLI catches this
// type and turns it into a one-line message plus a nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller handed in arguments outside the documented domain.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// The requested quantity does not exist for these inputs (degenerate
// phase matching, no oscillations without dispersion, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Unscaled complex erf would not fit in a double.
class OverflowError : public Error {
 public:
  using Error::Error;
};

// A numerical procedure did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double estimate, double error_bound)
      : Error(what), estimate_(estimate), error_bound_(error_bound) {}

  double estimate() const noexcept { return estimate_; }
  double error_bound() const noexcept { return error_bound_; }

 private:
  double estimate_;
  double error_bound_;
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace detail
}  // namespace disphom
