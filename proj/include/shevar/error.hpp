#ifndef SHEVAR_ERROR_HPP_
#define SHEVAR_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shevar {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside the domain of the requested operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// alpha == dim: the Riesz constant has a pole, the noise is white in space.
class WhiteNoiseCase : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double achieved_error)
      : Error(what + " (achieved error estimate " + std::to_string(achieved_error) + ")"),
        achieved_error_(achieved_error) {}
  double achieved_error() const noexcept { return achieved_error_; }

 private:
  double achieved_error_;
};

/// Circulant embedding produced a negative eigenvalue even after re-padding.
class EmbeddingFailure : public Error {
 public:
  using Error::Error;
};

class NumericalBlowup : public Error {
 public:
  NumericalBlowup(const std::string& what, std::size_t step)
      : Error(what + " at micro-step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// The joint covariance of two shifted blocks failed to factorize.
class InvalidShift : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

/// The observed path carries no information (zero denominator or no variation).
class DegeneratePath : public Error {
 public:
  using Error::Error;
};

/// Quadratic variations at two scales do not scale like a rough path.
class InconsistentScaling : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace shevar

#endif  // SHEVAR_ERROR_HPP_
