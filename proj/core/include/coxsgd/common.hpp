#ifndef COXSGD_COMMON_HPP
#define COXSGD_COMMON_HPP

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace coxsgd {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Largest |f(x)| accepted by the partial-likelihood kernels; exp(50) is far
/// from overflow, but anything beyond it indicates a diverging fit.
inline constexpr double kRiskGuard = 50.0;

/// Invalid user-facing configuration (batch size, schedule constants, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// SGD left the admissible region or produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A matrix that had to be inverted has an eigenvalue below the floor.
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-fatal diagnostics (dropped FB remainder, empty event sets, ...).
/// Defaults to stderr; tests may swap in a collecting sink.
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace coxsgd

#endif  // COXSGD_COMMON_HPP
