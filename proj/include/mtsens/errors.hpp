#pragma once

#include <stdexcept>
#include <string>

namespace mtsens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, violated invariant or mismatched dimensions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A numerically infeasible request, e.g. a confounding strength below the
/// lower bound implied by negative controls.
class Infeasible : public Error {
 public:
  explicit Infeasible(const std::string& what, double r2_min = 0.0)
      : Error(what), r2_min_(r2_min) {}
  double r2_min() const noexcept { return r2_min_; }

 private:
  double r2_min_;
};

/// Negative-control effects that are not in the row space of the scaled
/// confounder mean-difference matrix.
class Incompatible : public Error {
 public:
  Incompatible(const std::string& what, double residual_norm)
      : Error(what), residual_norm_(residual_norm) {}
  double residual_norm() const noexcept { return residual_norm_; }

 private:
  double residual_norm_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtsens
