#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace serodesign {

/// Malformed input: a model, parameter, box or configuration that breaks an
/// invariant. `path()` names the offending field when one is known.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& message, std::string path = {})
      : std::invalid_argument(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// An identifiability assumption failed, so no design has finite variance.
class AssumptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method stopped without meeting its tolerance. The best
/// iterate found is kept for diagnostics.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& message, Eigen::VectorXd best_iterate)
      : std::runtime_error(message), best_iterate_(std::move(best_iterate)) {}

  const Eigen::VectorXd& best_iterate() const noexcept { return best_iterate_; }

 private:
  Eigen::VectorXd best_iterate_;
};

}  // namespace serodesign
