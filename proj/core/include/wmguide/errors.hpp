#pragma once

#include <stdexcept>
#include <string>

namespace wmguide {

// Base of every error raised by the library. The CLI maps NumericFailure to
// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class UnsupportedSize : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class DegenerateInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, double partial = 0.0, double bound = 0.0)
      : Error(what), partial_(partial), bound_(bound) {}
  double partial() const noexcept { return partial_; }
  double bound() const noexcept { return bound_; }

 private:
  double partial_;
  double bound_;
};

// Covariance estimate not positive definite; usually the corpus is too small.
class CalibrationFailure : public NumericFailure {
 public:
  using NumericFailure::NumericFailure;
};

}  // namespace wmguide
