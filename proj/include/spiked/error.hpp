#pragma once

#include <stdexcept>
#include <string>

namespace spiked {

/// Bad input: malformed config, out-of-domain argument, unknown kind.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation that could not produce a trustworthy number.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The R-transform was asked for an argument beyond the largest value the
/// Stieltjes transform attains to the right of the support.
class RangeError : public NumericalError {
 public:
  RangeError(const std::string& what, double argument, double supremum)
      : NumericalError(what), argument_(argument), supremum_(supremum) {}

  double argument() const noexcept { return argument_; }
  double supremum() const noexcept { return supremum_; }

 private:
  double argument_;
  double supremum_;
};

}  // namespace spiked
