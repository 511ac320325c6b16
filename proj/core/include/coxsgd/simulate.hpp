#ifndef COXSGD_SIMULATE_HPP
#define COXSGD_SIMULATE_HPP

#include "coxsgd/rng.hpp"
#include "coxsgd/survival.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <utility>
#include <vector>

namespace coxsgd {

enum class RiskFunction {
  Linear,       ///< f0(x) = theta0^T x
  NonlinearV1,  ///< x1^2 x2^3 + log(x3+1) + sqrt(x4 x5 + 1) + exp(x5/2) - 8.6
};

/// Data-generating process: X uniform on a box, T* | X exponential with rate
/// exp(f0(X)) (baseline hazard 1), independent exponential censoring.
struct SimSpec {
  Index p = 1;
  double x_lo = 0.0;  ///< every covariate ~ U(x_lo, x_hi); equal bounds give a constant
  double x_hi = 1.0;
  RiskFunction risk = RiskFunction::Linear;
  Eigen::VectorXd theta0;  ///< Linear only
  double censor_rate = 0.0;  ///< 0 disables censoring
  std::optional<double> censor_target;  ///< calibrate censor_rate to this fraction
  std::optional<double> tau;            ///< administrative end of study

  /// Throws ConfigError on inconsistent fields.
  void validate() const;
};

void to_json(nlohmann::json& j, const SimSpec& spec);
void from_json(const nlohmann::json& j, SimSpec& spec);

double true_risk(const SimSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);

/// (X, min(T*, C*), I(T* <= C*)). Consumes exactly p + 2 uniforms.
SurvivalRecord draw_record(const SimSpec& spec, Rng& rng);
Dataset simulate_dataset(const SimSpec& spec, Index n, Rng& rng);

struct CensorCalibration {
  double rate = 0.0;
  double achieved = 0.0;  ///< censoring fraction at `rate` on the calibration sample
  /// (rate, fraction) for each bisection step, in evaluation order.
  std::vector<std::pair<double, double>> trace;
};

/// Bisection on the exponential censor rate over one fixed sample of
/// `draws` (X, T*, standard-exponential) triples, so the empirical censoring
/// fraction is monotone in the rate. Stops within +-`tolerance` of target.
CensorCalibration calibrate_censoring(const SimSpec& spec, double target, Rng& rng, Index draws = 100000,
                                      double tolerance = 0.005);

/// Empirical censoring fraction of `n` fresh records at the spec's rate.
double censoring_fraction(const SimSpec& spec, Index n, Rng& rng);

/// If censor_target is set, calibrates and stores censor_rate (seeded).
SimSpec resolve_censoring(SimSpec spec, std::uint64_t seed);

/// p = 1, theta0 = 1, X ~ U(0, 10), 30% exponential censoring.
SimSpec scalar_protocol();
/// p = 5 nonlinear risk, X ~ U(0, 1), 30% censoring.
SimSpec nonlinear_protocol();
/// p = 10, theta0 = 1_10, X ~ U(0, 1), 30% censoring.
SimSpec regression_protocol(Index p = 10);

}  // namespace coxsgd

#endif  // COXSGD_SIMULATE_HPP
