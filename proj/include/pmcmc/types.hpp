#ifndef PMCMC_TYPES_HPP
#define PMCMC_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace pmcmc {

/// Upper bound on the parameter dimension. Parameter vectors and matrices are
/// fixed-capacity Eigen types so that per-particle derivative evaluations do
/// not touch the heap.
inline constexpr int kMaxParams = 6;

using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxParams, 1>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                             kMaxParams, kMaxParams>;

/// A density or derivative evaluated to a non-finite value.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Weights that cannot be normalized (all zero, or all -inf in log domain).
class DegenerateWeightsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear algebra failure that regularization should have precluded.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number (0 when unknown).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Invalid user configuration (bad key, out-of-range value, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pmcmc

#endif
