#ifndef COXSGD_TEST_UTIL_HPP
#define COXSGD_TEST_UTIL_HPP

#include "coxsgd/rng.hpp"
#include "coxsgd/survival.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace coxsgd::testing {

// Random dataset with continuous times (no ties) unless tie_levels > 0, in
// which case times are drawn from {1, ..., tie_levels}.
inline Dataset random_dataset(Index n, Index p, Rng& rng, double event_prob = 0.7, int tie_levels = 0,
                              double x_scale = 1.0) {
  RowMatrix x(n, p);
  std::vector<double> t(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> e(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < p; ++k) x(i, k) = x_scale * (2.0 * rng.uniform() - 1.0);
    t[static_cast<std::size_t>(i)] =
        tie_levels > 0 ? static_cast<double>(1 + rng.below(static_cast<std::uint64_t>(tie_levels))) : rng.exponential();
    e[static_cast<std::size_t>(i)] = rng.uniform() < event_prob ? 1 : 0;
  }
  return Dataset(std::move(x), std::move(t), std::move(e));
}

inline Dataset make_dataset(std::vector<std::vector<double>> xs, std::vector<double> times,
                            std::vector<std::uint8_t> events) {
  const auto n = static_cast<Index>(xs.size());
  const auto p = static_cast<Index>(xs.front().size());
  RowMatrix x(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < p; ++k) x(i, k) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return Dataset(std::move(x), std::move(times), std::move(events));
}

// Double loop over the definition: -(1/norm) sum_events [f_i - log sum_{T_j >= T_i} exp f_j].
inline double naive_loss(const Dataset& d, const std::vector<Index>& idx, const std::vector<double>& f, double norm) {
  double acc = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (!d.event(idx[a])) continue;
    double s0 = 0.0;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (d.time(idx[b]) >= d.time(idx[a])) s0 += std::exp(f[b]);
    }
    acc += f[a] - std::log(s0);
  }
  return -acc / norm;
}

// Central differences of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x,
                                   double h) {
  Eigen::VectorXd g(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd a = x, b = x;
    a(k) += h;
    b(k) -= h;
    g(k) = (fn(a) - fn(b)) / (2.0 * h);
  }
  return g;
}

// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_sink({}); }
  std::vector<std::string> messages;
};

}  // namespace coxsgd::testing

#endif  // COXSGD_TEST_UTIL_HPP
