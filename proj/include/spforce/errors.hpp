#ifndef SPFORCE_ERRORS_HPP
#define SPFORCE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace spforce {

// Domain/validation problems throw std::domain_error or std::invalid_argument
// (CLI exit code 1). These two map to exit codes 2 and 3.

/// Solver, quadrature or fit did not reach the requested accuracy.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

/// File-system / parse failures.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spforce

#endif
