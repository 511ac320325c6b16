#ifndef COXSGD_SGD_HPP
#define COXSGD_SGD_HPP

#include "coxsgd/batching.hpp"
#include "coxsgd/cox_mlp.hpp"
#include "coxsgd/rng.hpp"
#include "coxsgd/survival.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace coxsgd {

/// Learning-rate schedule. `step` counts updates from 0, `epoch` from 0.
///   Constant         gamma = C
///   Polynomial       gamma = C / (step + 1)^alpha        (t = step + 1 >= 1)
///   EpochPolynomial  gamma = C / (epoch + 1), fixed within an epoch
///   AveragingPoly    gamma = C / (step + 1)
struct LrSchedule {
  enum class Kind { Constant, Polynomial, EpochPolynomial, AveragingPoly };
  Kind kind = Kind::Constant;
  double c = 0.01;
  double alpha = 0.0;

  static LrSchedule constant(double gamma) { return {Kind::Constant, gamma, 0.0}; }
  static LrSchedule polynomial(double c, double alpha) { return {Kind::Polynomial, c, alpha}; }
  static LrSchedule epoch_polynomial(double c) { return {Kind::EpochPolynomial, c, 1.0}; }
  static LrSchedule averaging(double c) { return {Kind::AveragingPoly, c, 1.0}; }

  double rate(Index step, Index epoch) const;
  /// Throws ConfigError unless C >= 0 and alpha in [0, 1].
  void validate() const;
};

void to_json(nlohmann::json& j, const LrSchedule& s);
void from_json(const nlohmann::json& j, LrSchedule& s);

enum class Recording {
  Epoch,      ///< t = 0 and the end of every epoch
  LogSpaced,  ///< t = 0 and every t divisible by 10^floor(log10 t)
  Every,      ///< every step
};

struct SgdConfig {
  SamplerConfig sampler;  ///< used by the Dataset overload of run_sgd
  LrSchedule schedule;
  std::optional<Index> epochs;      ///< either epochs ...
  std::optional<Index> iterations;  ///< ... or a step count
  bool project = false;
  double radius = std::numeric_limits<double>::infinity();  ///< ball radius B
  bool averaging = false;
  Recording recording = Recording::Epoch;
  /// Without projection, ||theta|| > divergence_factor * radius aborts.
  double divergence_factor = 10.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SgdConfig& c);
void from_json(const nlohmann::json& j, SgdConfig& c);

/// A batch: the records `indices` of `data`.
struct BatchView {
  const Dataset* data = nullptr;
  std::span<const Index> indices;
};

/// Supplies the mini-batch for each SGD step.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual Index batches_per_epoch() const = 0;
  virtual void begin_epoch(Index epoch) = 0;
  virtual BatchView next() = 0;
};

/// Offline SB/FB sampling from a fixed dataset.
class DatasetBatches final : public BatchSource {
 public:
  DatasetBatches(const Dataset& data, SamplerConfig config);
  Index batches_per_epoch() const override { return sampler_.batches_per_epoch(); }
  void begin_epoch(Index epoch) override;
  BatchView next() override;
  const BatchSampler& sampler() const noexcept { return sampler_; }

 private:
  const Dataset* data_;
  BatchSampler sampler_;
  std::vector<MiniBatch> current_;
  std::size_t cursor_ = 0;
};

/// Online mode: every step draws a fresh batch from a generator. One step
/// counts as one epoch.
class GeneratedBatches final : public BatchSource {
 public:
  GeneratedBatches(BatchGenerator generator, Rng rng);
  Index batches_per_epoch() const override { return 1; }
  void begin_epoch(Index) override {}
  BatchView next() override;

 private:
  BatchGenerator generator_;
  Rng rng_;
  Dataset batch_;
  std::vector<Index> indices_;
};

/// Loss whose parameters SGD updates.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Index dimension() const = 0;
  /// Mini-batch loss at `params`; writes its gradient into `grad`.
  virtual double loss_and_gradient(const Eigen::VectorXd& params, const BatchView& batch,
                                   Eigen::VectorXd& grad) const = 0;
  /// Applied after every update (masks, clipping); identity by default.
  virtual void constrain(Eigen::VectorXd&) const {}
};

class LinearCoxObjective final : public Objective {
 public:
  explicit LinearCoxObjective(Index p) : p_(p) {}
  Index dimension() const override { return p_; }
  double loss_and_gradient(const Eigen::VectorXd& params, const BatchView& batch, Eigen::VectorXd& grad) const override;

 private:
  Index p_;
};

class MlpCoxObjective final : public Objective {
 public:
  explicit MlpCoxObjective(MlpCoxModel prototype) : model_(std::move(prototype)) {}
  Index dimension() const override { return model_.parameter_count(); }
  double loss_and_gradient(const Eigen::VectorXd& params, const BatchView& batch, Eigen::VectorXd& grad) const override;
  void constrain(Eigen::VectorXd& params) const override;
  const MlpCoxModel& prototype() const noexcept { return model_; }

 private:
  mutable MlpCoxModel model_;
};

/// 0.5 * sum_i curvature_i (theta_i - center_i)^2, ignoring the batch.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(Eigen::VectorXd center, Eigen::VectorXd curvature)
      : center_(std::move(center)), curvature_(std::move(curvature)) {}
  Index dimension() const override { return center_.size(); }
  double loss_and_gradient(const Eigen::VectorXd& params, const BatchView& batch, Eigen::VectorXd& grad) const override;

 private:
  Eigen::VectorXd center_, curvature_;
};

struct TrajectoryPoint {
  Index t = 0;      ///< updates taken
  Index epoch = 0;  ///< completed epochs
  Eigen::VectorXd theta;
  Eigen::VectorXd averaged;  ///< empty unless averaging is on
  double loss = std::numeric_limits<double>::quiet_NaN();  ///< held-out if available, else last batch loss
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  /// Held-out loss before training (index 0) and after each epoch.
  std::vector<double> epoch_losses;
  Eigen::VectorXd final_theta;
  Eigen::VectorXd final_averaged;
  Index iterations = 0;
  Index projection_hits = 0;
};

/// Held-out evaluation callback (e.g. test-set full loss).
using Evaluator = std::function<double(const Eigen::VectorXd& params)>;

/// theta if ||theta|| <= radius, else theta * radius / ||theta||.
Eigen::VectorXd project_ball(const Eigen::VectorXd& theta, double radius);

/// avg_t = avg_{t-1} * t/(t+2) + theta_t * 2/(t+2), i.e. the (i+1)-weighted
/// mean of theta_0..theta_t. t = 0 initialises.
void weighted_average_update(Eigen::VectorXd& average, const Eigen::VectorXd& theta_t, Index t);

/// Projected SGD: theta <- Pi_B[theta - gamma_t * grad], optional weighted
/// averaging, recording per `config.recording`. Deterministic given the
/// source's seed.
Trajectory run_sgd(BatchSource& source, const Objective& objective, const Eigen::VectorXd& init,
                   const SgdConfig& config, const Evaluator& evaluator = {});

/// Offline convenience: batches from `data` per config.sampler.
Trajectory run_sgd(const Dataset& data, const Objective& objective, const Eigen::VectorXd& init,
                   const SgdConfig& config, const Evaluator& evaluator = {});

/// phi_beta(t) = (t^beta - 1)/beta, or log t when beta = 0.
double phi(double beta, double t);

/// Upper bound on E||theta_t - theta0||^2 for projected SGD with
/// gamma_t = C/t^alpha:
///   alpha < 1: {delta0^2 + D^2 C^2 phi_{1-2alpha}(t)} exp(-mu C t^{1-alpha} / 2) + 2 D^2 C^2 / (mu t^alpha)
///   alpha = 1: delta0^2 t^{-mu C} + 2 D^2 C^2 t^{-mu C} phi_{mu C - 1}(t)
double theory_bound(double t, double alpha, double c, double mu, double grad_bound, double delta0);

}  // namespace coxsgd

#endif  // COXSGD_SGD_HPP
