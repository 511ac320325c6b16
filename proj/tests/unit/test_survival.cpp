#include "coxsgd/dataset_io.hpp"
#include "coxsgd/survival.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace coxsgd;
using coxsgd::testing::make_dataset;
using coxsgd::testing::naive_loss;
using coxsgd::testing::random_dataset;

namespace {

std::vector<double> zeros(Index n) { return std::vector<double>(static_cast<std::size_t>(n), 0.0); }

std::vector<double> linear_f(const Dataset& d, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd f = d.covariates() * theta;
  return {f.data(), f.data() + f.size()};
}

}  // namespace

TEST(Dataset, SortedIndexIsDescendingAndStable) {
  auto d = make_dataset({{0}, {1}, {2}, {3}, {4}}, {2.0, 5.0, 2.0, 1.0, 5.0}, {1, 0, 1, 1, 0});
  const auto order = d.sorted_index();
  ASSERT_EQ(order.size(), 5u);
  EXPECT_EQ(std::vector<Index>(order.begin(), order.end()), (std::vector<Index>{1, 4, 0, 2, 3}));
  EXPECT_EQ(d.event_count(), 3);
}

TEST(Dataset, RejectsBadTimes) {
  EXPECT_THROW(make_dataset({{0}, {1}}, {1.0, 0.0}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(make_dataset({{0}, {1}}, {1.0, -2.0}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(make_dataset({{0}, {1}}, {1.0, std::nan("")}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(make_dataset({{0}, {1}}, {1.0, INFINITY}, {1, 1}), std::invalid_argument);
}

TEST(Dataset, RejectsMismatchedLengths) {
  RowMatrix x(2, 1);
  x << 0, 1;
  EXPECT_THROW(Dataset(x, {1.0}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(Dataset(x, {1.0, 2.0}, {1}), std::invalid_argument);
}

TEST(Dataset, RecordsRoundTripAndSubset) {
  Rng rng(1);
  auto d = random_dataset(10, 3, rng);
  std::vector<SurvivalRecord> recs;
  for (Index i = 0; i < d.size(); ++i) recs.push_back(d.record(i));
  auto back = Dataset::from_records(recs);
  EXPECT_EQ(back.covariates(), d.covariates());
  const std::vector<Index> idx{7, 2, 4};
  auto sub = d.subset(idx);
  ASSERT_EQ(sub.size(), 3);
  for (Index k = 0; k < 3; ++k) {
    EXPECT_EQ(sub.time(k), d.time(idx[static_cast<std::size_t>(k)]));
    EXPECT_EQ(sub.x(k), d.x(idx[static_cast<std::size_t>(k)]));
  }
}

TEST(Dataset, FromRecordsRejectsMixedDimension) {
  std::vector<SurvivalRecord> recs(2);
  recs[0].x = Eigen::VectorXd::Zero(2);
  recs[1].x = Eigen::VectorXd::Zero(3);
  recs[0].event = true;
  EXPECT_THROW(Dataset::from_records(recs), std::invalid_argument);
}

TEST(RiskSetWeights, TwoRecords) {
  auto d = make_dataset({{0}, {0}}, {1.0, 2.0}, {1, 0});
  auto agg = risk_set_weights(d, zeros(2));
  ASSERT_EQ(agg.event_index, (std::vector<Index>{0}));
  EXPECT_DOUBLE_EQ(agg.s0(0), 2.0);
}

TEST(RiskSetWeights, NestedRiskSets) {
  auto d = make_dataset({{0}, {0}, {0}}, {3.0, 2.0, 1.0}, {1, 1, 1});
  auto agg = risk_set_weights(d, zeros(3));
  ASSERT_EQ(agg.s0.size(), 3);
  EXPECT_DOUBLE_EQ(agg.s0(0), 1.0);
  EXPECT_DOUBLE_EQ(agg.s0(1), 2.0);
  EXPECT_DOUBLE_EQ(agg.s0(2), 3.0);
}

TEST(RiskSetWeights, MatchesDoubleLoop) {
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = rep == 0 ? 4 : 2 + static_cast<Index>(rng.below(30));
    auto d = random_dataset(n, 2, rng, 0.6, rep % 2 ? 4 : 0);
    std::vector<double> f(static_cast<std::size_t>(n));
    for (auto& v : f) v = rng.uniform(-2.0, 2.0);
    auto agg = risk_set_weights(d, f, true);
    Index k = 0;
    for (Index i = 0; i < n; ++i) {
      if (!d.event(i)) continue;
      ASSERT_EQ(agg.event_index[static_cast<std::size_t>(k)], i);
      double s0 = 0.0;
      Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(2);
      for (Index j = 0; j < n; ++j) {
        if (d.time(j) >= d.time(i)) {
          s0 += std::exp(f[static_cast<std::size_t>(j)]);
          s1 += std::exp(f[static_cast<std::size_t>(j)]) * d.x(j);
        }
      }
      EXPECT_NEAR(agg.s0(k), s0, 1e-12 * s0);
      EXPECT_LE((agg.s1.row(k) - s1).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + s1.cwiseAbs().maxCoeff()));
      ++k;
    }
    EXPECT_EQ(k, static_cast<Index>(agg.event_index.size()));
  }
}

TEST(RiskSetWeights, RejectsNonFiniteAndLarge) {
  auto d = make_dataset({{0}, {0}}, {1.0, 2.0}, {1, 0});
  EXPECT_THROW(risk_set_weights(d, std::vector<double>{0.0, std::nan("")}), std::domain_error);
  EXPECT_THROW(risk_set_weights(d, std::vector<double>{0.0, INFINITY}), std::domain_error);
  EXPECT_THROW(risk_set_weights(d, std::vector<double>{51.0, 0.0}), std::domain_error);
  EXPECT_THROW(risk_set_weights(d, std::vector<double>{0.0}), std::invalid_argument);
}

TEST(FullLoss, SymmetricZeroRisk) {
  auto d = make_dataset({{1}, {0}}, {1.0, 2.0}, {1, 0});
  EXPECT_NEAR(full_loss(d, zeros(2)).value, 0.5 * std::log(2.0), 1e-15);
  EXPECT_NEAR(full_loss(d, zeros(2)).value, 0.346574, 1e-6);
}

TEST(FullLoss, OnlyLongestSurvivorEventIsZero) {
  auto d = make_dataset({{0.3}, {-1}, {2}}, {1.0, 2.0, 9.0}, {0, 0, 1});
  const auto l = full_loss(d, std::vector<double>{0.4, -1.2, 3.0});
  EXPECT_DOUBLE_EQ(l.value, 0.0);
  EXPECT_EQ(l.events, 1);
}

TEST(FullLoss, MatchesNaiveForLinearRisk) {
  Rng rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    auto d = random_dataset(5, 3, rng);
    Eigen::VectorXd theta(3);
    for (Index k = 0; k < 3; ++k) theta(k) = rng.uniform(-1.5, 1.5);
    const auto f = linear_f(d, theta);
    const double expected = naive_loss(d, all_indices(5), f, 5.0);
    EXPECT_NEAR(full_loss(d, f).value, expected, 1e-12 * (1.0 + expected));
  }
}

TEST(FullLoss, ModelOverloadAgrees) {
  struct Doubler : RelativeRiskModel {
    Index input_dim() const override { return 2; }
    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override { return 2.0 * x.sum(); }
  };
  Rng rng(4);
  auto d = random_dataset(12, 2, rng);
  std::vector<double> f;
  for (Index i = 0; i < d.size(); ++i) f.push_back(2.0 * d.x(i).sum());
  EXPECT_NEAR(full_loss(d, Doubler{}).value, full_loss(d, f).value, 1e-14);
}

TEST(FullLoss, NoEventsGivesZeroWithWarning) {
  coxsgd::testing::WarningCapture cap;
  auto d = make_dataset({{0}, {1}}, {1.0, 2.0}, {0, 0});
  const auto l = full_loss(d, zeros(2));
  EXPECT_TRUE(l.no_events());
  EXPECT_EQ(l.value, 0.0);
  EXPECT_FALSE(cap.messages.empty());
}

TEST(FullLoss, NonNegativePermutationAndShiftInvariant) {
  Rng rng(5);
  for (int rep = 0; rep < 40; ++rep) {
    const Index n = 3 + static_cast<Index>(rng.below(20));
    auto d = random_dataset(n, 2, rng, 0.5, rep % 3 == 0 ? 3 : 0);
    if (d.event_count() == 0) continue;
    std::vector<double> f(static_cast<std::size_t>(n));
    for (auto& v : f) v = rng.uniform(-3.0, 3.0);
    const double base = full_loss(d, f).value;
    EXPECT_GE(base, 0.0);

    std::vector<double> shifted = f;
    for (auto& v : shifted) v += 1.7;
    EXPECT_NEAR(full_loss(d, shifted).value, base, 1e-12 * (1.0 + base));

    std::vector<Index> perm = all_indices(n);
    for (Index i = n - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    auto pd = d.subset(perm);
    std::vector<double> pf;
    for (Index i : perm) pf.push_back(f[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(full_loss(pd, pf).value, base, 1e-12 * (1.0 + base));
  }
}

TEST(TiePolicy, TiedEventsShareRiskSet) {
  auto d = make_dataset({{0}, {0}}, {2.0, 2.0}, {1, 1});
  // Both risk sets are {1,2}: loss = -(1/2) * 2 * (0 - log 2).
  EXPECT_NEAR(full_loss(d, zeros(2)).value, std::log(2.0), 1e-15);
  auto ord = tie_policy(d);
  EXPECT_EQ(ord.group_start, (std::vector<Index>{0, 2}));
  EXPECT_EQ(ord.order, (std::vector<Index>{0, 1}));
}

TEST(TiePolicy, TieWithLongerSurvivor) {
  auto d = make_dataset({{0}, {0}, {0}}, {1.0, 1.0, 2.0}, {1, 0, 0});
  auto agg = risk_set_weights(d, zeros(3));
  ASSERT_EQ(agg.s0.size(), 1);
  EXPECT_DOUBLE_EQ(agg.s0(0), 3.0);
  auto ord = tie_policy(d);
  EXPECT_EQ(ord.order, (std::vector<Index>{2, 0, 1}));
  EXPECT_EQ(ord.group_start, (std::vector<Index>{0, 1, 3}));
}

TEST(TiePolicy, SubsetOrdering) {
  auto d = make_dataset({{0}, {0}, {0}, {0}}, {4.0, 1.0, 4.0, 3.0}, {1, 1, 1, 1});
  const std::vector<Index> idx{3, 2, 0};
  auto ord = tie_policy(d, idx);
  EXPECT_EQ(ord.order, (std::vector<Index>{0, 2, 3}));
  EXPECT_EQ(ord.group_start, (std::vector<Index>{0, 2, 3}));
}

TEST(TiePolicy, PermutingTiedRecordsLeavesLossUnchanged) {
  auto d = make_dataset({{0.5}, {-0.2}, {1.0}, {0.1}}, {2.0, 2.0, 2.0, 1.0}, {1, 0, 1, 1});
  std::vector<double> f{0.5, -0.2, 1.0, 0.1};
  const double base = full_loss(d, f).value;
  const std::vector<Index> perm{2, 0, 3, 1};
  std::vector<double> pf;
  for (Index i : perm) pf.push_back(f[static_cast<std::size_t>(i)]);
  EXPECT_NEAR(full_loss(d.subset(perm), pf).value, base, 1e-15);
}

TEST(PartialLikelihood, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  auto d = random_dataset(9, 1, rng, 0.6, 3);
  const auto idx = all_indices(9);
  std::vector<double> f(9);
  for (auto& v : f) v = rng.uniform(-1.0, 1.0);
  auto pl = partial_likelihood(d, idx, f, 9.0, true);
  EXPECT_NEAR(pl.loss, naive_loss(d, idx, f, 9.0), 1e-13);
  for (std::size_t k = 0; k < f.size(); ++k) {
    auto a = f, b = f;
    a[k] += 1e-6;
    b[k] -= 1e-6;
    const double fd = (naive_loss(d, idx, a, 9.0) - naive_loss(d, idx, b, 9.0)) / 2e-6;
    EXPECT_NEAR(pl.df(static_cast<Index>(k)), fd, 1e-8);
  }
  EXPECT_NEAR(pl.df.sum(), 0.0, 1e-14);  // location invariance
}

TEST(DatasetCsv, RoundTrip) {
  Rng rng(7);
  auto d = random_dataset(20, 3, rng, 0.5, 0, 3.0);
  std::stringstream ss;
  write_dataset_csv(ss, d, "hello");
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("# hello\n", 0), 0u);
  EXPECT_NE(text.find("x1,x2,x3,time,event"), std::string::npos);
  auto back = read_dataset_csv(ss);
  ASSERT_EQ(back.size(), d.size());
  ASSERT_EQ(back.dim(), d.dim());
  for (Index i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.time(i), d.time(i));
    EXPECT_EQ(back.event(i), d.event(i));
    EXPECT_EQ(back.x(i), d.x(i));
  }
}

TEST(DatasetCsv, RejectsMalformed) {
  std::stringstream bad_header("a,b\n1,2\n");
  EXPECT_THROW(read_dataset_csv(bad_header), std::invalid_argument);
  std::stringstream bad_event("x1,time,event\n0.5,1.0,2\n");
  EXPECT_THROW(read_dataset_csv(bad_event), std::invalid_argument);
  std::stringstream short_row("x1,time,event\n0.5,1.0\n");
  EXPECT_THROW(read_dataset_csv(short_row), std::invalid_argument);
}

TEST(Provenance, HashIsStable) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(provenance_line("{}", 5), "config_hash=" + [] {
              char buf[17];
              std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64("{}")));
              return std::string(buf);
            }() + " seed=5");
}
