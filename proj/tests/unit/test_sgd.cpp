#include "coxsgd/cox_linear.hpp"
#include "coxsgd/inference.hpp"
#include "coxsgd/sgd.hpp"
#include "coxsgd/simulate.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace coxsgd;
using coxsgd::testing::random_dataset;

namespace {

SgdConfig quad_config(double gamma, Index iterations) {
  SgdConfig c;
  c.sampler = {Strategy::SB, 2, 1};
  c.schedule = LrSchedule::constant(gamma);
  c.iterations = iterations;
  c.recording = Recording::Every;
  return c;
}

Dataset tiny_data() {
  Rng rng(0);
  return random_dataset(8, 1, rng);
}

}  // namespace

TEST(ProjectBall, Examples) {
  const Eigen::Vector2d v(3.0, 4.0);
  EXPECT_EQ(project_ball(v, 10.0), Eigen::VectorXd(v));
  const auto p = project_ball(v, 1.0);
  EXPECT_NEAR(p(0), 0.6, 1e-15);
  EXPECT_NEAR(p(1), 0.8, 1e-15);
  EXPECT_THROW(project_ball(v, 0.0), std::invalid_argument);
}

TEST(ProjectBall, Idempotent) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd t(3);
    for (Index k = 0; k < 3; ++k) t(k) = rng.uniform(-5.0, 5.0);
    const auto once = project_ball(t, 2.0);
    EXPECT_LE(once.norm(), 2.0 + 1e-12);
    EXPECT_LE((project_ball(once, 2.0) - once).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Schedule, Rates) {
  EXPECT_DOUBLE_EQ(LrSchedule::constant(0.3).rate(10, 2), 0.3);
  EXPECT_DOUBLE_EQ(LrSchedule::polynomial(2.0, 0.5).rate(3, 0), 1.0);
  EXPECT_DOUBLE_EQ(LrSchedule::polynomial(2.0, 1.0).rate(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(LrSchedule::epoch_polynomial(4.0).rate(123, 0), 4.0);
  EXPECT_DOUBLE_EQ(LrSchedule::epoch_polynomial(4.0).rate(5, 3), 1.0);
  EXPECT_DOUBLE_EQ(LrSchedule::averaging(3.0).rate(2, 0), 1.0);
  EXPECT_THROW(LrSchedule::polynomial(1.0, 1.5).validate(), ConfigError);
  EXPECT_THROW(LrSchedule::constant(-1.0).validate(), ConfigError);
}

TEST(Schedule, JsonRoundTrip) {
  nlohmann::json j = LrSchedule::polynomial(0.7, 0.5);
  auto back = j.get<LrSchedule>();
  EXPECT_EQ(back.kind, LrSchedule::Kind::Polynomial);
  EXPECT_EQ(back.c, 0.7);
  EXPECT_EQ(back.alpha, 0.5);
  EXPECT_THROW(nlohmann::json({{"kind", "cosine"}, {"C", 1.0}}).get<LrSchedule>(), ConfigError);
}

TEST(SgdConfigJson, RoundTrip) {
  SgdConfig c;
  c.sampler = {Strategy::FB, 8, 3};
  c.schedule = LrSchedule::epoch_polynomial(4.0);
  c.epochs = 12;
  c.project = true;
  c.radius = 5.0;
  c.averaging = true;
  c.recording = Recording::LogSpaced;
  nlohmann::json j = c;
  auto back = j.get<SgdConfig>();
  EXPECT_EQ(back.sampler.strategy, Strategy::FB);
  EXPECT_EQ(back.sampler.s, 8);
  EXPECT_EQ(*back.epochs, 12);
  EXPECT_FALSE(back.iterations.has_value());
  EXPECT_TRUE(back.project);
  EXPECT_EQ(back.radius, 5.0);
  EXPECT_TRUE(back.averaging);
  EXPECT_EQ(back.recording, Recording::LogSpaced);
}

TEST(RunSgd, ZeroRateIsNoOp) {
  auto d = tiny_data();
  LinearCoxObjective obj(1);
  auto cfg = quad_config(0.0, 25);
  const Eigen::VectorXd init = Eigen::VectorXd::Constant(1, 0.37);
  auto traj = run_sgd(d, obj, init, cfg);
  EXPECT_EQ(traj.final_theta, init);
  EXPECT_EQ(traj.points.size(), 26u);
}

TEST(RunSgd, QuadraticContraction) {
  auto d = tiny_data();
  QuadraticObjective obj(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Ones(1));
  auto traj = run_sgd(d, obj, Eigen::VectorXd::Zero(1), quad_config(0.5, 3));
  ASSERT_EQ(traj.points.size(), 4u);
  for (const auto& pt : traj.points) {
    EXPECT_NEAR(pt.theta(0), 2.0 * (1.0 - std::pow(0.5, double(pt.t))), 1e-15);
  }
  EXPECT_NEAR(traj.final_theta(0), 1.75, 1e-15);
}

TEST(RunSgd, ProjectionKeepsIteratesInBall) {
  auto d = tiny_data();
  QuadraticObjective obj(Eigen::VectorXd::Constant(2, 10.0), Eigen::VectorXd::Ones(2));
  auto cfg = quad_config(0.3, 40);
  cfg.project = true;
  cfg.radius = 1.0;
  auto traj = run_sgd(d, obj, Eigen::VectorXd::Zero(2), cfg);
  for (const auto& pt : traj.points) EXPECT_LE(pt.theta.norm(), 1.0 + 1e-12);
  EXPECT_GT(traj.projection_hits, 0);
  EXPECT_NEAR(traj.final_theta.norm(), 1.0, 1e-12);
}

TEST(RunSgd, DivergenceGuards) {
  auto d = tiny_data();
  QuadraticObjective obj(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  auto cfg = quad_config(3.0, 100);  // |1 - 3| = 2: the iterate doubles each step
  cfg.radius = 1.0;
  EXPECT_THROW(run_sgd(d, obj, Eigen::VectorXd::Ones(1), cfg), DivergenceError);

  Rng rng(2);
  auto big = random_dataset(20, 1, rng, 0.7, 0, 5.0);
  LinearCoxObjective lin(1);
  auto cfg2 = quad_config(0.0, 3);
  EXPECT_THROW(run_sgd(big, lin, Eigen::VectorXd::Constant(1, 20.0), cfg2), DivergenceError);
}

TEST(RunSgd, ConfigValidation) {
  auto d = tiny_data();
  LinearCoxObjective obj(1);
  SgdConfig cfg;
  cfg.sampler = {Strategy::SB, 2, 0};
  EXPECT_THROW(run_sgd(d, obj, Eigen::VectorXd::Zero(1), cfg), ConfigError);
  cfg.epochs = 1;
  cfg.iterations = 1;
  EXPECT_THROW(run_sgd(d, obj, Eigen::VectorXd::Zero(1), cfg), ConfigError);
  cfg.iterations.reset();
  EXPECT_THROW(run_sgd(d, obj, Eigen::VectorXd::Zero(2), cfg), std::invalid_argument);
  cfg.project = true;
  cfg.radius = 0.0;
  EXPECT_THROW(run_sgd(d, obj, Eigen::VectorXd::Zero(1), cfg), ConfigError);
}

TEST(RunSgd, DeterministicAndEpochRecording) {
  Rng rng(3);
  auto d = random_dataset(40, 2, rng);
  LinearCoxObjective obj(2);
  SgdConfig cfg;
  cfg.sampler = {Strategy::FB, 8, 5};
  cfg.schedule = LrSchedule::epoch_polynomial(1.0);
  cfg.epochs = 6;
  cfg.averaging = true;
  Evaluator eval = [&](const Eigen::VectorXd& t) { return evaluate_full(d, t, Derivatives::None).loss; };
  auto a = run_sgd(d, obj, Eigen::VectorXd::Zero(2), cfg, eval);
  auto b = run_sgd(d, obj, Eigen::VectorXd::Zero(2), cfg, eval);
  EXPECT_EQ(a.final_theta, b.final_theta);
  EXPECT_EQ(a.final_averaged, b.final_averaged);
  EXPECT_EQ(a.points.size(), 7u);
  EXPECT_EQ(a.epoch_losses.size(), 7u);
  EXPECT_EQ(a.iterations, 30);
  for (std::size_t e = 0; e < a.points.size(); ++e) {
    EXPECT_EQ(a.points[e].epoch, static_cast<Index>(e));
    EXPECT_EQ(a.points[e].t, static_cast<Index>(5 * e));
    EXPECT_EQ(a.points[e].loss, a.epoch_losses[e]);
  }
  EXPECT_LT(a.epoch_losses.back(), a.epoch_losses.front());
}

TEST(RunSgd, LogSpacedRecording) {
  auto d = tiny_data();
  QuadraticObjective obj(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  auto cfg = quad_config(0.01, 250);
  cfg.recording = Recording::LogSpaced;
  auto traj = run_sgd(d, obj, Eigen::VectorXd::Ones(1), cfg);
  std::vector<Index> ts;
  for (const auto& pt : traj.points) ts.push_back(pt.t);
  std::vector<Index> expected{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200};
  EXPECT_EQ(ts, expected);
}

TEST(RunSgd, OnlineGeneratedBatches) {
  auto spec = resolve_censoring(scalar_protocol(), 1);
  GeneratedBatches src(population_batches(spec, 8), Rng(4, 1));
  LinearCoxObjective obj(1);
  SgdConfig cfg;
  cfg.schedule = LrSchedule::averaging(8.0);
  cfg.iterations = 3000;
  cfg.averaging = true;
  cfg.project = true;
  cfg.radius = 4.0;
  cfg.recording = Recording::LogSpaced;
  auto traj = run_sgd(src, obj, Eigen::VectorXd::Zero(1), cfg);
  EXPECT_NEAR(traj.final_averaged(0), 1.0, 0.1);
}

TEST(MlpObjective, MaskSurvivesTraining) {
  Rng rng(5);
  auto d = random_dataset(64, 3, rng);
  auto proto = MlpCoxModel::initialized({3, 6, 1}, rng, 12);
  MlpCoxObjective obj(proto);
  SgdConfig cfg;
  cfg.sampler = {Strategy::SB, 16, 2};
  cfg.schedule = LrSchedule::constant(0.05);
  cfg.epochs = 5;
  auto traj = run_sgd(d, obj, proto.parameters(), cfg);
  const Eigen::VectorXd mask = proto.mask();
  for (const auto& pt : traj.points) {
    for (Index k = 0; k < mask.size(); ++k) {
      if (mask(k) == 0.0) {
        ASSERT_EQ(pt.theta(k), 0.0);
      }
    }
  }
}

TEST(WeightedAverage, Examples) {
  Eigen::VectorXd avg;
  for (Index t = 0; t < 10; ++t) {
    weighted_average_update(avg, Eigen::VectorXd::Constant(1, 2.5), t);
    EXPECT_NEAR(avg(0), 2.5, 1e-15);
  }
  for (Index t = 0; t <= 2; ++t) weighted_average_update(avg, Eigen::VectorXd::Constant(1, double(t)), t);
  EXPECT_NEAR(avg(0), 8.0 / 6.0, 1e-15);
}

TEST(WeightedAverage, IncrementalEqualsDirectSum) {
  Rng rng(6);
  for (int rep = 0; rep < 1000; ++rep) {
    const Index len = 1 + static_cast<Index>(rng.below(40));
    Eigen::VectorXd avg;
    double weighted = 0.0;
    for (Index t = 0; t < len; ++t) {
      const double v = rng.uniform(-3.0, 3.0);
      weighted_average_update(avg, Eigen::VectorXd::Constant(1, v), t);
      weighted += double(t + 1) * v;
    }
    const double t = double(len - 1);
    ASSERT_NEAR(avg(0), 2.0 / ((t + 1) * (t + 2)) * weighted, 1e-12);
  }
}

TEST(TheoryBound, PhiExamples) {
  EXPECT_NEAR(phi(0.0, 10.0), 2.302585, 1e-6);
  EXPECT_DOUBLE_EQ(phi(1.0, 5.0), 4.0);
  EXPECT_DOUBLE_EQ(phi(-0.5, 4.0), 1.0);
}

TEST(TheoryBound, AlphaOneExample) {
  // mu C = 2 with C = 1.
  EXPECT_NEAR(theory_bound(100.0, 1.0, 1.0, 2.0, 1.0, 1.0), 0.0199, 1e-12);
}

TEST(TheoryBound, AlphaBelowOneFormula) {
  const double t = 50, a = 0.5, c = 0.8, mu = 0.7, d = 1.3, delta0 = 0.9;
  const double expected = (delta0 * delta0 + d * d * c * c * phi(1.0 - 2.0 * a, t)) * std::exp(-mu * c * std::pow(t, 1.0 - a) / 2.0) +
                          2.0 * d * d * c * c / (mu * std::pow(t, a));
  EXPECT_NEAR(theory_bound(t, a, c, mu, d, delta0), expected, 1e-12 * expected);
  EXPECT_THROW(theory_bound(0.5, a, c, mu, d, delta0), std::invalid_argument);
}
