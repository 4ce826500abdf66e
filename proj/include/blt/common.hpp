#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>

namespace blt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Error raised by any pipeline stage. The module tag names the stage that
/// failed so the CLI can report "<module>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

}  // namespace blt
