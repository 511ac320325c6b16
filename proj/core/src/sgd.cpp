#include "coxsgd/sgd.hpp"

#include "coxsgd/cox_linear.hpp"

#include <cmath>
#include <sstream>

namespace coxsgd {

double LrSchedule::rate(Index step, Index epoch) const {
  switch (kind) {
    case Kind::Constant:
      return c;
    case Kind::Polynomial:
      return c / std::pow(static_cast<double>(step + 1), alpha);
    case Kind::EpochPolynomial:
      return c / static_cast<double>(epoch + 1);
    case Kind::AveragingPoly:
      return c / static_cast<double>(step + 1);
  }
  return c;
}

void LrSchedule::validate() const {
  if (!(c >= 0.0) || !std::isfinite(c)) throw ConfigError("learning-rate constant must be finite and >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("learning-rate exponent alpha must lie in [0, 1]");
}

namespace {

const char* kind_name(LrSchedule::Kind k) {
  switch (k) {
    case LrSchedule::Kind::Constant: return "constant";
    case LrSchedule::Kind::Polynomial: return "polynomial";
    case LrSchedule::Kind::EpochPolynomial: return "epoch_polynomial";
    case LrSchedule::Kind::AveragingPoly: return "averaging";
  }
  return "constant";
}

const char* recording_name(Recording r) {
  switch (r) {
    case Recording::Epoch: return "epoch";
    case Recording::LogSpaced: return "log";
    case Recording::Every: return "every";
  }
  return "epoch";
}

bool log_spaced_hit(Index t) {
  if (t <= 0) return true;
  Index unit = 1;
  while (unit * 10 <= t) unit *= 10;
  return t % unit == 0;
}

}  // namespace

void to_json(nlohmann::json& j, const LrSchedule& s) {
  j = nlohmann::json{{"kind", kind_name(s.kind)}, {"C", s.c}};
  if (s.kind == LrSchedule::Kind::Polynomial) j["alpha"] = s.alpha;
}

void from_json(const nlohmann::json& j, LrSchedule& s) {
  const std::string kind = j.value("kind", std::string("constant"));
  const double c = j.contains("C") ? j.at("C").get<double>() : j.value("gamma", 0.01);
  if (kind == "constant") {
    s = LrSchedule::constant(c);
  } else if (kind == "polynomial") {
    s = LrSchedule::polynomial(c, j.value("alpha", 1.0));
  } else if (kind == "epoch_polynomial") {
    s = LrSchedule::epoch_polynomial(c);
  } else if (kind == "averaging") {
    s = LrSchedule::averaging(c);
  } else {
    throw ConfigError("unknown learning-rate schedule '" + kind + "'");
  }
  s.validate();
}

void SgdConfig::validate() const {
  schedule.validate();
  if (sampler.s < 2) throw ConfigError("batch size must be at least 2");
  if (epochs.has_value() == iterations.has_value()) throw ConfigError("set exactly one of epochs or iterations");
  if ((epochs && *epochs < 0) || (iterations && *iterations < 0)) throw ConfigError("negative run length");
  if (project && !(radius > 0.0)) throw ConfigError("projection radius must be positive");
}

void to_json(nlohmann::json& j, const SgdConfig& c) {
  j = nlohmann::json{{"sampler", c.sampler},       {"schedule", c.schedule},
                     {"project", c.project},       {"averaging", c.averaging},
                     {"recording", recording_name(c.recording)}};
  if (c.epochs) j["epochs"] = *c.epochs;
  if (c.iterations) j["iterations"] = *c.iterations;
  if (std::isfinite(c.radius)) j["radius"] = c.radius;
}

void from_json(const nlohmann::json& j, SgdConfig& c) {
  c = SgdConfig{};
  if (j.contains("sampler")) c.sampler = j.at("sampler").get<SamplerConfig>();
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<LrSchedule>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<Index>();
  if (j.contains("iterations")) c.iterations = j.at("iterations").get<Index>();
  c.project = j.value("project", false);
  if (j.contains("radius")) c.radius = j.at("radius").get<double>();
  c.averaging = j.value("averaging", false);
  const std::string rec = j.value("recording", std::string("epoch"));
  if (rec == "epoch") {
    c.recording = Recording::Epoch;
  } else if (rec == "log") {
    c.recording = Recording::LogSpaced;
  } else if (rec == "every") {
    c.recording = Recording::Every;
  } else {
    throw ConfigError("unknown recording cadence '" + rec + "'");
  }
  c.validate();
}

DatasetBatches::DatasetBatches(const Dataset& data, SamplerConfig config)
    : data_(&data), sampler_(config, data.size()) {}

void DatasetBatches::begin_epoch(Index epoch) {
  current_ = sampler_.epoch(static_cast<std::uint64_t>(epoch));
  cursor_ = 0;
}

BatchView DatasetBatches::next() {
  if (cursor_ >= current_.size()) throw std::logic_error("DatasetBatches: epoch exhausted");
  const auto& b = current_[cursor_++];
  return {data_, b.indices};
}

GeneratedBatches::GeneratedBatches(BatchGenerator generator, Rng rng)
    : generator_(std::move(generator)), rng_(rng) {}

BatchView GeneratedBatches::next() {
  batch_ = generator_(rng_);
  if (static_cast<Index>(indices_.size()) != batch_.size()) indices_ = all_indices(batch_.size());
  return {&batch_, indices_};
}

double LinearCoxObjective::loss_and_gradient(const Eigen::VectorXd& params, const BatchView& batch,
                                             Eigen::VectorXd& grad) const {
  LinearCoxTerms terms = evaluate_linear(*batch.data, batch.indices, params, Derivatives::Gradient);
  grad = std::move(terms.gradient);
  return terms.loss;
}

double MlpCoxObjective::loss_and_gradient(const Eigen::VectorXd& params, const BatchView& batch,
                                          Eigen::VectorXd& grad) const {
  model_.set_parameters(params);
  MiniBatch mb;
  mb.indices.assign(batch.indices.begin(), batch.indices.end());
  MlpLossGrad lg = batch_loss_grad(*batch.data, mb, model_);
  grad = std::move(lg.gradient);
  return lg.loss;
}

void MlpCoxObjective::constrain(Eigen::VectorXd& params) const {
  model_.set_parameters(params);
  params = model_.parameters();
}

double QuadraticObjective::loss_and_gradient(const Eigen::VectorXd& params, const BatchView&,
                                             Eigen::VectorXd& grad) const {
  const Eigen::VectorXd d = params - center_;
  grad = curvature_.cwiseProduct(d);
  return 0.5 * d.dot(grad);
}

Eigen::VectorXd project_ball(const Eigen::VectorXd& theta, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("project_ball: radius must be positive");
  const double norm = theta.norm();
  if (norm <= radius) return theta;
  return theta * (radius / norm);
}

void weighted_average_update(Eigen::VectorXd& average, const Eigen::VectorXd& theta_t, Index t) {
  if (t < 0) throw std::invalid_argument("weighted_average_update: t must be >= 0");
  if (t == 0) {
    average = theta_t;
    return;
  }
  const double td = static_cast<double>(t);
  average = average * (td / (td + 2.0)) + theta_t * (2.0 / (td + 2.0));
}

Trajectory run_sgd(BatchSource& source, const Objective& objective, const Eigen::VectorXd& init,
                   const SgdConfig& config, const Evaluator& evaluator) {
  config.schedule.validate();
  if (config.epochs.has_value() == config.iterations.has_value()) {
    throw ConfigError("set exactly one of epochs or iterations");
  }
  if (config.project && !(config.radius > 0.0)) throw ConfigError("projection radius must be positive");
  if (init.size() != objective.dimension()) throw std::invalid_argument("run_sgd: initial point has wrong dimension");

  const Index per_epoch = source.batches_per_epoch();
  const Index total = config.epochs ? *config.epochs * per_epoch : *config.iterations;

  Trajectory traj;
  Eigen::VectorXd theta = init;
  objective.constrain(theta);
  if (config.project) theta = project_ball(theta, config.radius);
  Eigen::VectorXd average;
  if (config.averaging) weighted_average_update(average, theta, 0);

  double last_loss = std::numeric_limits<double>::quiet_NaN();
  auto record = [&](Index t, Index epoch, double heldout) {
    TrajectoryPoint pt;
    pt.t = t;
    pt.epoch = epoch;
    pt.theta = theta;
    if (config.averaging) pt.averaged = average;
    pt.loss = std::isnan(heldout) ? last_loss : heldout;
    traj.points.push_back(std::move(pt));
  };

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double initial_eval = evaluator ? evaluator(theta) : nan;
  if (evaluator) traj.epoch_losses.push_back(initial_eval);
  record(0, 0, initial_eval);

  Eigen::VectorXd grad;
  for (Index step = 0; step < total; ++step) {
    const Index epoch = step / per_epoch;
    if (step % per_epoch == 0) source.begin_epoch(epoch);
    const BatchView batch = source.next();

    double loss = 0.0;
    try {
      loss = objective.loss_and_gradient(theta, batch, grad);
    } catch (const std::domain_error& e) {
      std::ostringstream os;
      os << "SGD diverged at step " << step << ": " << e.what();
      throw DivergenceError(os.str());
    }
    if (!std::isfinite(loss) || !grad.allFinite()) {
      std::ostringstream os;
      os << "SGD diverged at step " << step << ": non-finite loss or gradient";
      throw DivergenceError(os.str());
    }
    last_loss = loss;

    theta.noalias() -= config.schedule.rate(step, epoch) * grad;
    objective.constrain(theta);
    if (config.project && theta.norm() > config.radius) {
      theta = project_ball(theta, config.radius);
      ++traj.projection_hits;
    }
    if (!config.project && std::isfinite(config.radius) && theta.norm() > config.divergence_factor * config.radius) {
      std::ostringstream os;
      os << "SGD diverged at step " << step << ": ||theta|| = " << theta.norm() << " exceeds "
         << config.divergence_factor << " * B";
      throw DivergenceError(os.str());
    }

    const Index t = step + 1;
    if (config.averaging) weighted_average_update(average, theta, t);

    const bool epoch_end = t % per_epoch == 0;
    double heldout = nan;
    if (epoch_end && evaluator && (config.epochs || config.recording == Recording::Epoch)) {
      heldout = evaluator(theta);
      traj.epoch_losses.push_back(heldout);
    }
    bool rec = false;
    switch (config.recording) {
      case Recording::Epoch: rec = epoch_end; break;
      case Recording::LogSpaced: rec = log_spaced_hit(t); break;
      case Recording::Every: rec = true; break;
    }
    if (rec) record(t, t / per_epoch, heldout);
  }

  traj.iterations = total;
  traj.final_theta = theta;
  if (config.averaging) traj.final_averaged = average;
  return traj;
}

Trajectory run_sgd(const Dataset& data, const Objective& objective, const Eigen::VectorXd& init,
                   const SgdConfig& config, const Evaluator& evaluator) {
  DatasetBatches source(data, config.sampler);
  return run_sgd(source, objective, init, config, evaluator);
}

double phi(double beta, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("phi: t must be positive");
  if (beta == 0.0) return std::log(t);
  return (std::pow(t, beta) - 1.0) / beta;
}

double theory_bound(double t, double alpha, double c, double mu, double grad_bound, double delta0) {
  if (!(t >= 1.0)) throw std::invalid_argument("theory_bound: t must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("theory_bound: alpha must lie in [0, 1]");
  if (!(c > 0.0 && mu > 0.0 && grad_bound > 0.0 && delta0 >= 0.0)) {
    throw std::invalid_argument("theory_bound: C, mu, D must be positive");
  }
  const double d2c2 = grad_bound * grad_bound * c * c;
  if (alpha < 1.0) {
    return (delta0 * delta0 + d2c2 * phi(1.0 - 2.0 * alpha, t)) * std::exp(-mu * c / 2.0 * std::pow(t, 1.0 - alpha)) +
           2.0 * d2c2 / (mu * std::pow(t, alpha));
  }
  const double decay = std::pow(t, -mu * c);
  return delta0 * delta0 * decay + 2.0 * d2c2 * decay * phi(mu * c - 1.0, t);
}

}  // namespace coxsgd
