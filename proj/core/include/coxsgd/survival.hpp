#ifndef COXSGD_SURVIVAL_HPP
#define COXSGD_SURVIVAL_HPP

#include "coxsgd/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace coxsgd {

/// One right-censored observation: covariates, observed time min(T*, C*) and
/// the event indicator I(T* <= C*).
struct SurvivalRecord {
  Eigen::VectorXd x;
  double time = 1.0;
  bool event = false;
};

/// Immutable collection of records sharing one covariate dimension.
///
/// Construction validates the records and caches the descending-time order
/// used by every risk-set sweep (ties broken by original index).
class Dataset {
 public:
  Dataset() = default;
  Dataset(RowMatrix x, std::vector<double> time, std::vector<std::uint8_t> event);
  static Dataset from_records(std::span<const SurvivalRecord> records);

  Index size() const noexcept { return static_cast<Index>(time_.size()); }
  Index dim() const noexcept { return x_.cols(); }
  bool empty() const noexcept { return time_.empty(); }

  const RowMatrix& covariates() const noexcept { return x_; }
  auto x(Index i) const { return x_.row(i); }
  double time(Index i) const { return time_[static_cast<std::size_t>(i)]; }
  bool event(Index i) const { return event_[static_cast<std::size_t>(i)] != 0; }
  std::span<const double> times() const noexcept { return time_; }
  std::span<const std::uint8_t> events() const noexcept { return event_; }

  /// Permutation of record indices by descending time, stable in index.
  std::span<const Index> sorted_index() const noexcept { return sorted_; }
  Index event_count() const noexcept { return event_count_; }

  SurvivalRecord record(Index i) const;
  Dataset subset(std::span<const Index> indices) const;

 private:
  RowMatrix x_;
  std::vector<double> time_;
  std::vector<std::uint8_t> event_;
  std::vector<Index> sorted_;
  Index event_count_ = 0;
};

/// Anything that maps covariates to a scalar log relative risk f(x).
class RelativeRiskModel {
 public:
  virtual ~RelativeRiskModel() = default;
  virtual Index input_dim() const = 0;
  virtual double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const = 0;
  /// f(x_i) for every record.
  virtual Eigen::VectorXd predict(const Dataset& data) const;
};

/// Canonical Breslow ordering: records by descending time, grouped by tie.
struct RiskOrdering {
  std::vector<Index> order;
  /// group_start[g] .. group_start[g+1] delimit tie group g in `order`;
  /// the final entry equals order.size().
  std::vector<Index> group_start;
};

/// Orders `indices` (default: the whole dataset) for a risk-set sweep. Every
/// member of a tie group belongs to the risk set of every event in the group.
RiskOrdering tie_policy(const Dataset& data);
RiskOrdering tie_policy(const Dataset& data, std::span<const Index> indices);

/// Per-event risk-set sums S0_i = sum_{T_j >= T_i} exp(f_j) and, on request,
/// S1_i = sum_{T_j >= T_i} exp(f_j) x_j.
struct RiskSetAggregates {
  std::vector<Index> event_index;  ///< event records, ascending record index
  Eigen::VectorXd s0;              ///< one entry per event
  RowMatrix s1;                    ///< events x p, empty unless requested
};

RiskSetAggregates risk_set_weights(const Dataset& data, std::span<const double> f_values,
                                   bool with_first_moment = false);

/// Negative log partial likelihood of a subset together with its derivative
/// in the relative risks.
struct PartialLikelihood {
  double loss = 0.0;
  Index events = 0;
  /// d loss / d f for each entry of the subset (same order as the indices);
  /// empty unless requested.
  Eigen::VectorXd df;
};

/// -(1/normalizer) * sum over events i in `indices` of
/// [f_i - log sum_{j in indices, T_j >= T_i} exp(f_j)], risk sets formed
/// inside the subset. `f` is aligned with `indices`.
PartialLikelihood partial_likelihood(const Dataset& data, std::span<const Index> indices,
                                     std::span<const double> f, double normalizer, bool with_gradient);

/// Loss value plus the number of events that contributed.
struct LossValue {
  double value = 0.0;
  Index events = 0;
  bool no_events() const noexcept { return events == 0; }
};

/// Full-sample loss L^(n) with 1/n normalisation. An event-free dataset
/// yields 0 and emits a warning.
LossValue full_loss(const Dataset& data, std::span<const double> f_values);
LossValue full_loss(const Dataset& data, const RelativeRiskModel& model);

/// 0, 1, ..., n-1.
std::vector<Index> all_indices(Index n);

/// Throws std::domain_error unless every value is finite and |f| <= kRiskGuard.
void check_risk_values(std::span<const double> f);

}  // namespace coxsgd

#endif  // COXSGD_SURVIVAL_HPP
