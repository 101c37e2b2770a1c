#pragma once

#include <stdexcept>
#include <string>

namespace kicksense {

/// Bad user input: malformed config, inconsistent dimensions, out-of-range
/// parameters. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: iteration did not converge, matrix not factorizable,
/// non-finite values produced. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kicksense
