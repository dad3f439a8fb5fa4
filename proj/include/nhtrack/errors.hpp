#pragma once

#include <stdexcept>
#include <string>

namespace nhtrack {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A function was evaluated at (or numerically at) a pole or branch point,
// e.g. tan at pi/2 or a model field where two neighbour axles are orthogonal.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, double input)
      : Error(what + " (input " + std::to_string(input) + ")"), input_(input) {}
  double input() const { return input_; }

 private:
  double input_;
};

// Caller violated a documented precondition.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A configuration lies on the boundary between two component manifolds.
class BoundaryError : public Error {
 public:
  BoundaryError(const std::string& what, int joint)
      : Error(what), joint_(joint) {}
  // 1-based index of the shape coordinate that hit the boundary.
  int joint() const { return joint_; }

 private:
  int joint_;
};

// Numerical inversion of the chained-form transform failed.
class InversionError : public Error {
 public:
  InversionError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// The desired trajectory or reference cannot be produced (stop, exit from
// the component, zero reference speed).
class ReferenceError : public Error {
 public:
  using Error::Error;
};

// Operation not available for the chosen model.
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace nhtrack
