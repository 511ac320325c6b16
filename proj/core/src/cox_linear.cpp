#include "coxsgd/cox_linear.hpp"

#include <algorithm>
#include <cmath>

namespace coxsgd {

LinearCoxTerms evaluate_linear(const Dataset& data, std::span<const Index> indices, const Eigen::VectorXd& theta,
                               Derivatives what, double normalizer) {
  if (theta.size() != data.dim()) throw std::invalid_argument("evaluate_linear: theta/data dimension mismatch");
  const auto s = static_cast<Index>(indices.size());
  const Index p = data.dim();
  if (normalizer <= 0.0) normalizer = static_cast<double>(s);

  // Sorted by descending time, ties by record id.
  std::vector<Index> order(indices.begin(), indices.end());
  std::sort(order.begin(), order.end(), [&data](Index a, Index b) {
    const double ta = data.time(a), tb = data.time(b);
    return ta > tb || (ta == tb && a < b);
  });

  Eigen::VectorXd eta(s);
  for (Index k = 0; k < s; ++k) eta(k) = data.x(order[static_cast<std::size_t>(k)]).dot(theta);
  check_risk_values(std::span<const double>(eta.data(), static_cast<std::size_t>(s)));

  const bool grad = what != Derivatives::None;
  const bool hess = what == Derivatives::Hessian;

  LinearCoxTerms out;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(hess ? p : 0, hess ? p : 0);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(grad ? p : 0);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(hess ? p : 0, hess ? p : 0);
  double acc = 0.0;

  Index k = 0;
  while (k < s) {
    const double t = data.time(order[static_cast<std::size_t>(k)]);
    Index end = k;
    for (; end < s && data.time(order[static_cast<std::size_t>(end)]) == t; ++end) {
      const auto xj = data.x(order[static_cast<std::size_t>(end)]).transpose();
      const double w = std::exp(eta(end));
      s0 += w;
      if (grad) s1.noalias() += w * xj;
      if (hess) s2.selfadjointView<Eigen::Lower>().rankUpdate(xj, w);
    }
    Index group_events = 0;
    Eigen::VectorXd xsum;
    for (Index m = k; m < end; ++m) {
      const Index i = order[static_cast<std::size_t>(m)];
      if (!data.event(i)) continue;
      acc += eta(m);
      ++group_events;
      if (grad) {
        if (xsum.size() == 0) xsum = Eigen::VectorXd::Zero(p);
        xsum += data.x(i).transpose();
      }
    }
    if (group_events > 0) {
      const auto d = static_cast<double>(group_events);
      acc -= d * std::log(s0);
      out.events += group_events;
      if (grad) {
        const Eigen::VectorXd mean = s1 / s0;
        g.noalias() -= xsum - d * mean;
        if (hess) {
          Eigen::MatrixXd cov = s2.selfadjointView<Eigen::Lower>();
          cov /= s0;
          cov.noalias() -= mean * mean.transpose();
          h += d * cov;
        }
      }
    }
    k = end;
  }

  out.loss = -acc / normalizer;
  if (grad) out.gradient = g / normalizer;
  if (hess) {
    h /= normalizer;
    out.hessian = 0.5 * (h + h.transpose());
  }
  return out;
}

double batch_loss(const Dataset& data, const MiniBatch& batch, const Eigen::VectorXd& theta) {
  return evaluate_linear(data, batch.indices, theta, Derivatives::None).loss;
}

Eigen::VectorXd batch_gradient(const Dataset& data, const MiniBatch& batch, const Eigen::VectorXd& theta) {
  return evaluate_linear(data, batch.indices, theta, Derivatives::Gradient).gradient;
}

Eigen::MatrixXd batch_hessian(const Dataset& data, const MiniBatch& batch, const Eigen::VectorXd& theta) {
  return evaluate_linear(data, batch.indices, theta, Derivatives::Hessian).hessian;
}

LinearCoxTerms evaluate_full(const Dataset& data, const Eigen::VectorXd& theta, Derivatives what) {
  const auto idx = all_indices(data.size());
  return evaluate_linear(data, idx, theta, what, static_cast<double>(data.size()));
}

}  // namespace coxsgd
