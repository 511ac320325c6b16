#include "coxsgd/survival.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>

namespace coxsgd {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s = [](std::string_view msg) { std::cerr << "[coxsgd] warning: " << msg << '\n'; };
  return s;
}

}  // namespace

void set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex());
  sink() = s ? std::move(s) : [](std::string_view msg) { std::cerr << "[coxsgd] warning: " << msg << '\n'; };
}

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  sink()(message);
}

Dataset::Dataset(RowMatrix x, std::vector<double> time, std::vector<std::uint8_t> event)
    : x_(std::move(x)), time_(std::move(time)), event_(std::move(event)) {
  if (static_cast<Index>(time_.size()) != x_.rows() || event_.size() != time_.size()) {
    throw std::invalid_argument("Dataset: covariates, times and events differ in length");
  }
  for (std::size_t i = 0; i < time_.size(); ++i) {
    if (!std::isfinite(time_[i]) || time_[i] <= 0.0) {
      std::ostringstream os;
      os << "Dataset: record " << i << " has non-positive or non-finite time " << time_[i];
      throw std::invalid_argument(os.str());
    }
    if (event_[i] > 1) throw std::invalid_argument("Dataset: event indicator must be 0 or 1");
  }
  if (!x_.allFinite()) throw std::invalid_argument("Dataset: non-finite covariate");

  sorted_ = all_indices(size());
  std::stable_sort(sorted_.begin(), sorted_.end(),
                   [this](Index a, Index b) { return time_[static_cast<std::size_t>(a)] > time_[static_cast<std::size_t>(b)]; });
  event_count_ = std::count(event_.begin(), event_.end(), std::uint8_t{1});
}

Dataset Dataset::from_records(std::span<const SurvivalRecord> records) {
  if (records.empty()) return Dataset(RowMatrix(0, 0), {}, {});
  const Index p = records.front().x.size();
  RowMatrix x(static_cast<Index>(records.size()), p);
  std::vector<double> time;
  std::vector<std::uint8_t> event;
  time.reserve(records.size());
  event.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].x.size() != p) throw std::invalid_argument("Dataset: records differ in covariate dimension");
    x.row(static_cast<Index>(i)) = records[i].x.transpose();
    time.push_back(records[i].time);
    event.push_back(records[i].event ? 1 : 0);
  }
  return Dataset(std::move(x), std::move(time), std::move(event));
}

SurvivalRecord Dataset::record(Index i) const { return {x_.row(i).transpose(), time(i), event(i)}; }

Dataset Dataset::subset(std::span<const Index> indices) const {
  RowMatrix x(static_cast<Index>(indices.size()), dim());
  std::vector<double> time;
  std::vector<std::uint8_t> event;
  time.reserve(indices.size());
  event.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index i = indices[k];
    if (i < 0 || i >= size()) throw std::out_of_range("Dataset::subset: index out of range");
    x.row(static_cast<Index>(k)) = x_.row(i);
    time.push_back(this->time(i));
    event.push_back(event_[static_cast<std::size_t>(i)]);
  }
  return Dataset(std::move(x), std::move(time), std::move(event));
}

Eigen::VectorXd RelativeRiskModel::predict(const Dataset& data) const {
  Eigen::VectorXd f(data.size());
  for (Index i = 0; i < data.size(); ++i) f(i) = predict(data.x(i));
  return f;
}

std::vector<Index> all_indices(Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

void check_risk_values(std::span<const double> f) {
  for (double v : f) {
    if (!std::isfinite(v)) throw std::domain_error("non-finite relative risk value");
    if (std::abs(v) > kRiskGuard) {
      std::ostringstream os;
      os << "relative risk " << v << " exceeds the overflow guard |f| <= " << kRiskGuard;
      throw std::domain_error(os.str());
    }
  }
}

namespace {

RiskOrdering group_by_time(const Dataset& data, std::vector<Index> order) {
  RiskOrdering out;
  out.order = std::move(order);
  const auto n = static_cast<Index>(out.order.size());
  for (Index k = 0; k < n; ++k) {
    if (k == 0 || data.time(out.order[static_cast<std::size_t>(k)]) !=
                      data.time(out.order[static_cast<std::size_t>(k - 1)])) {
      out.group_start.push_back(k);
    }
  }
  out.group_start.push_back(n);
  return out;
}

}  // namespace

RiskOrdering tie_policy(const Dataset& data) {
  return group_by_time(data, std::vector<Index>(data.sorted_index().begin(), data.sorted_index().end()));
}

RiskOrdering tie_policy(const Dataset& data, std::span<const Index> indices) {
  std::vector<Index> order(indices.begin(), indices.end());
  std::sort(order.begin(), order.end(), [&data](Index a, Index b) {
    const double ta = data.time(a), tb = data.time(b);
    return ta > tb || (ta == tb && a < b);
  });
  return group_by_time(data, std::move(order));
}

RiskSetAggregates risk_set_weights(const Dataset& data, std::span<const double> f_values, bool with_first_moment) {
  if (static_cast<Index>(f_values.size()) != data.size()) {
    throw std::invalid_argument("risk_set_weights: one f value per record required");
  }
  check_risk_values(f_values);

  const RiskOrdering ord = tie_policy(data);
  const Index p = data.dim();
  // Per-record slot, compacted to event order at the end.
  std::vector<double> s0_of(static_cast<std::size_t>(data.size()), 0.0);
  RowMatrix s1_of;
  if (with_first_moment) s1_of = RowMatrix::Zero(data.size(), p);

  double s0 = 0.0;
  Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(p);
  for (std::size_t g = 0; g + 1 < ord.group_start.size(); ++g) {
    const Index begin = ord.group_start[g], end = ord.group_start[g + 1];
    for (Index k = begin; k < end; ++k) {
      const Index j = ord.order[static_cast<std::size_t>(k)];
      const double w = std::exp(f_values[static_cast<std::size_t>(j)]);
      s0 += w;
      if (with_first_moment) s1 += w * data.x(j);
    }
    for (Index k = begin; k < end; ++k) {
      const Index i = ord.order[static_cast<std::size_t>(k)];
      if (!data.event(i)) continue;
      s0_of[static_cast<std::size_t>(i)] = s0;
      if (with_first_moment) s1_of.row(i) = s1;
    }
  }

  RiskSetAggregates out;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.event(i)) out.event_index.push_back(i);
  }
  const auto m = static_cast<Index>(out.event_index.size());
  out.s0.resize(m);
  if (with_first_moment) out.s1.resize(m, p);
  for (Index e = 0; e < m; ++e) {
    const Index i = out.event_index[static_cast<std::size_t>(e)];
    out.s0(e) = s0_of[static_cast<std::size_t>(i)];
    if (with_first_moment) out.s1.row(e) = s1_of.row(i);
  }
  return out;
}

PartialLikelihood partial_likelihood(const Dataset& data, std::span<const Index> indices, std::span<const double> f,
                                     double normalizer, bool with_gradient) {
  if (indices.size() != f.size()) throw std::invalid_argument("partial_likelihood: f must align with indices");
  check_risk_values(f);

  const auto s = static_cast<Index>(indices.size());
  // Sort positions (not record ids) so f stays addressable.
  std::vector<Index> pos = all_indices(s);
  std::sort(pos.begin(), pos.end(), [&](Index a, Index b) {
    const Index ia = indices[static_cast<std::size_t>(a)], ib = indices[static_cast<std::size_t>(b)];
    const double ta = data.time(ia), tb = data.time(ib);
    return ta > tb || (ta == tb && ia < ib);
  });

  PartialLikelihood out;
  std::vector<Index> group_start;
  std::vector<double> group_inv_s0;  // sum over the group's events of 1/S0
  Eigen::VectorXd w(s);
  double s0 = 0.0;
  double acc = 0.0;

  Index k = 0;
  while (k < s) {
    const double t = data.time(indices[static_cast<std::size_t>(pos[static_cast<std::size_t>(k)])]);
    Index end = k;
    while (end < s && data.time(indices[static_cast<std::size_t>(pos[static_cast<std::size_t>(end)])]) == t) {
      const Index q = pos[static_cast<std::size_t>(end)];
      w(q) = std::exp(f[static_cast<std::size_t>(q)]);
      s0 += w(q);
      ++end;
    }
    double inv = 0.0;
    const double log_s0 = std::log(s0);
    for (Index m = k; m < end; ++m) {
      const Index q = pos[static_cast<std::size_t>(m)];
      if (!data.event(indices[static_cast<std::size_t>(q)])) continue;
      acc += f[static_cast<std::size_t>(q)] - log_s0;
      inv += 1.0 / s0;
      ++out.events;
    }
    group_start.push_back(k);
    group_inv_s0.push_back(inv);
    k = end;
  }
  group_start.push_back(s);
  out.loss = -acc / normalizer;

  if (with_gradient) {
    out.df = Eigen::VectorXd::Zero(s);
    // j belongs to the risk set of every event at or before its own time:
    // walk groups from the earliest time upward, accumulating 1/S0.
    double cumulative = 0.0;
    for (auto g = static_cast<std::ptrdiff_t>(group_inv_s0.size()) - 1; g >= 0; --g) {
      cumulative += group_inv_s0[static_cast<std::size_t>(g)];
      for (Index m = group_start[static_cast<std::size_t>(g)]; m < group_start[static_cast<std::size_t>(g) + 1]; ++m) {
        const Index q = pos[static_cast<std::size_t>(m)];
        const double delta = data.event(indices[static_cast<std::size_t>(q)]) ? 1.0 : 0.0;
        out.df(q) = -(delta - w(q) * cumulative) / normalizer;
      }
    }
  }
  return out;
}

LossValue full_loss(const Dataset& data, std::span<const double> f_values) {
  if (static_cast<Index>(f_values.size()) != data.size()) {
    throw std::invalid_argument("full_loss: one f value per record required");
  }
  if (data.empty()) throw std::invalid_argument("full_loss: empty dataset");
  const auto idx = all_indices(data.size());
  const PartialLikelihood pl = partial_likelihood(data, idx, f_values, static_cast<double>(data.size()), false);
  if (pl.events == 0) warn("full_loss: dataset has no events; loss is 0");
  return {pl.loss, pl.events};
}

LossValue full_loss(const Dataset& data, const RelativeRiskModel& model) {
  if (model.input_dim() != data.dim()) throw std::invalid_argument("full_loss: model/data dimension mismatch");
  const Eigen::VectorXd f = model.predict(data);
  return full_loss(data, std::span<const double>(f.data(), static_cast<std::size_t>(f.size())));
}

}  // namespace coxsgd
