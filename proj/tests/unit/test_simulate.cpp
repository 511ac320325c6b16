#include "coxsgd/inference.hpp"
#include "coxsgd/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace coxsgd;

namespace {

SimSpec constant_x_spec(double x, double censor_rate) {
  SimSpec s;
  s.p = 1;
  s.x_lo = s.x_hi = x;
  s.theta0 = Eigen::VectorXd::Ones(1);
  s.censor_rate = censor_rate;
  return s;
}

}  // namespace

TEST(Simulate, UnitExponentialWithoutCensoring) {
  auto spec = constant_x_spec(0.0, 0.0);
  Rng rng(1);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    auto r = draw_record(spec, rng);
    ASSERT_TRUE(r.event);
    sum += r.time;
  }
  EXPECT_NEAR(sum / n, 1.0, 0.01);
}

TEST(Simulate, ExponentialMeanAtFixedX) {
  auto spec = constant_x_spec(2.0, 0.0);
  Rng rng(2);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = draw_record(spec, rng).time;
    sum += t;
    sumsq += t * t;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  EXPECT_NEAR(mean, std::exp(-2.0), 3.0 * se);
}

TEST(Simulate, DrawConsumesFixedNumberOfUniforms) {
  auto spec = regression_protocol(3);
  spec.censor_rate = 0.5;
  Rng a(3), b(3);
  draw_record(spec, a);
  for (int i = 0; i < 3 + 2; ++i) b.uniform();
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Simulate, NonlinearRiskMeanMatchesQuadrature) {
  // E f0 on U(0,1)^5 by independent quadrature of each term.
  const int m = 2000;
  double sqrt_term = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) sqrt_term += std::sqrt((i + 0.5) / m * (j + 0.5) / m + 1.0);
  }
  sqrt_term /= double(m) * m;
  const double expected = (1.0 / 3.0) * (1.0 / 4.0) + (2.0 * std::log(2.0) - 1.0) + sqrt_term +
                          2.0 * (std::exp(0.5) - 1.0) - 8.6;

  auto spec = nonlinear_protocol();
  Rng rng(4);
  const int n = 1000000;
  double sum = 0.0, sumsq = 0.0;
  Eigen::VectorXd x(5);
  for (int i = 0; i < n; ++i) {
    for (Index k = 0; k < 5; ++k) x(k) = rng.uniform();
    const double f = true_risk(spec, x);
    sum += f;
    sumsq += f * f;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  EXPECT_NEAR(mean, expected, 4.0 * se);
  // The stated offset does not centre the risk: E f0 is about -5.7.
  EXPECT_NEAR(expected, -5.72, 0.01);
}

TEST(Simulate, CalibrationHitsTargetOnNonlinear) {
  Rng rng(5);
  auto cal = calibrate_censoring(nonlinear_protocol(), 0.30, rng);
  EXPECT_GE(cal.achieved, 0.295);
  EXPECT_LE(cal.achieved, 0.305);
  EXPECT_GT(cal.rate, 0.0);
  // Fraction is monotone along the bisection trace.
  auto trace = cal.trace;
  std::sort(trace.begin(), trace.end());
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GE(trace[i].second, trace[i - 1].second);

  auto spec = nonlinear_protocol();
  spec.censor_rate = cal.rate;
  Rng fresh(6);
  EXPECT_NEAR(censoring_fraction(spec, 100000, fresh), 0.30, 0.01);
}

TEST(Simulate, SymmetricExponentialsHalfCensored) {
  auto spec = constant_x_spec(0.0, 1.0);
  Rng rng(7);
  const int n = 100000;
  EXPECT_NEAR(censoring_fraction(spec, n, rng), 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(Simulate, VanishingCensorRate) {
  auto spec = scalar_protocol();
  spec.censor_target.reset();
  double prev = 1.0;
  for (double rate : {1.0, 1e-2, 1e-4, 1e-6}) {
    spec.censor_rate = rate;
    Rng rng(8);
    const double f = censoring_fraction(spec, 20000, rng);
    EXPECT_LE(f, prev);
    prev = f;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Simulate, AdministrativeCutoff) {
  auto spec = constant_x_spec(0.0, 0.0);
  spec.tau = 0.5;
  Rng rng(9);
  auto d = simulate_dataset(spec, 5000, rng);
  for (Index i = 0; i < d.size(); ++i) {
    EXPECT_LE(d.time(i), 0.5);
    if (!d.event(i)) {
      EXPECT_EQ(d.time(i), 0.5);
    }
  }
}

TEST(Simulate, DeterministicUnderSeed) {
  auto spec = resolve_censoring(regression_protocol(4), 3);
  auto spec2 = resolve_censoring(regression_protocol(4), 3);
  EXPECT_EQ(spec.censor_rate, spec2.censor_rate);
  Rng a(10), b(10);
  auto d1 = simulate_dataset(spec, 100, a);
  auto d2 = simulate_dataset(spec, 100, b);
  EXPECT_EQ(d1.covariates(), d2.covariates());
  EXPECT_TRUE(std::equal(d1.times().begin(), d1.times().end(), d2.times().begin()));
}

TEST(Simulate, SpecValidationAndJson) {
  SimSpec bad = regression_protocol(3);
  bad.theta0 = Eigen::VectorXd::Ones(2);
  EXPECT_THROW(bad.validate(), ConfigError);
  SimSpec bad2 = nonlinear_protocol();
  bad2.p = 4;
  EXPECT_THROW(bad2.validate(), ConfigError);
  SimSpec bad3 = scalar_protocol();
  bad3.censor_target = 1.2;
  EXPECT_THROW(bad3.validate(), ConfigError);

  nlohmann::json j = scalar_protocol();
  auto back = j.get<SimSpec>();
  EXPECT_EQ(back.p, 1);
  EXPECT_EQ(back.x_hi, 10.0);
  EXPECT_EQ(back.theta0, Eigen::VectorXd::Ones(1));
  ASSERT_TRUE(back.censor_target.has_value());
  EXPECT_EQ(*back.censor_target, 0.30);
  EXPECT_THROW(nlohmann::json({{"p", 5}, {"risk", "cubic"}}).get<SimSpec>(), ConfigError);
}

TEST(Simulate, CoxMleIsConsistent) {
  auto spec = resolve_censoring(regression_protocol(3), 11);
  spec.theta0 << 1.0, -0.5, 0.25;
  Rng rng(12);
  auto d = simulate_dataset(spec, 50000, rng);
  auto fit = cox_mle(d);
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(fit.theta(k), spec.theta0(k), 0.05);
}

TEST(Simulate, ProtocolCensoringNearThirtyPercent) {
  for (auto spec : {scalar_protocol(), nonlinear_protocol(), regression_protocol()}) {
    auto resolved = resolve_censoring(spec, 1);
    Rng rng(13);
    EXPECT_NEAR(censoring_fraction(resolved, 50000, rng), 0.30, 0.01);
  }
}
