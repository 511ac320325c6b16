#ifndef COXSGD_COX_LINEAR_HPP
#define COXSGD_COX_LINEAR_HPP

#include "coxsgd/batching.hpp"
#include "coxsgd/survival.hpp"

#include <span>

namespace coxsgd {

/// Cox regression: f(x) = theta^T x.
class LinearCoxModel final : public RelativeRiskModel {
 public:
  LinearCoxModel() = default;
  explicit LinearCoxModel(Eigen::VectorXd theta) : theta_(std::move(theta)) {}

  Index input_dim() const override { return theta_.size(); }
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override { return x.dot(theta_); }
  Eigen::VectorXd predict(const Dataset& data) const override { return data.covariates() * theta_; }

  const Eigen::VectorXd& theta() const noexcept { return theta_; }
  Eigen::VectorXd& theta() noexcept { return theta_; }

 private:
  Eigen::VectorXd theta_;
};

/// Which derivatives evaluate_linear should produce.
enum class Derivatives { None, Gradient, Hessian };

/// Within-subset Cox quantities for the linear model.
struct LinearCoxTerms {
  double loss = 0.0;
  Index events = 0;
  Eigen::VectorXd gradient;  ///< empty for Derivatives::None
  Eigen::MatrixXd hessian;   ///< empty unless Derivatives::Hessian
};

/// Loss -(1/norm) sum_events [theta^T x_i - log S0_i] over `indices`, with
/// risk sets formed inside the subset; gradient
/// -(1/norm) sum_events [x_i - S1_i/S0_i] and Hessian
/// (1/norm) sum_events [S2_i/S0_i - (S1_i/S0_i)(S1_i/S0_i)^T].
/// `normalizer` defaults to the subset size.
LinearCoxTerms evaluate_linear(const Dataset& data, std::span<const Index> indices, const Eigen::VectorXd& theta,
                               Derivatives what, double normalizer = 0.0);

double batch_loss(const Dataset& data, const MiniBatch& batch, const Eigen::VectorXd& theta);
Eigen::VectorXd batch_gradient(const Dataset& data, const MiniBatch& batch, const Eigen::VectorXd& theta);
Eigen::MatrixXd batch_hessian(const Dataset& data, const MiniBatch& batch, const Eigen::VectorXd& theta);

inline double batch_loss(const Dataset& data, const MiniBatch& batch, const LinearCoxModel& m) {
  return batch_loss(data, batch, m.theta());
}
inline Eigen::VectorXd batch_gradient(const Dataset& data, const MiniBatch& batch, const LinearCoxModel& m) {
  return batch_gradient(data, batch, m.theta());
}
inline Eigen::MatrixXd batch_hessian(const Dataset& data, const MiniBatch& batch, const LinearCoxModel& m) {
  return batch_hessian(data, batch, m.theta());
}

/// The whole dataset as a single batch (normaliser n), i.e. the full-sample
/// loss and its derivatives.
LinearCoxTerms evaluate_full(const Dataset& data, const Eigen::VectorXd& theta, Derivatives what);

}  // namespace coxsgd

#endif  // COXSGD_COX_LINEAR_HPP
