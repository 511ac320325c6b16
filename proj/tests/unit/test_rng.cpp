#include "coxsgd/rng.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>

using coxsgd::Philox4x32;
using coxsgd::Rng;

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (Philox4x32::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
  const auto out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (Philox4x32::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (Philox4x32::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, SameSeedStreamSameSequence) {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Philox, StreamsAndSeedsDiffer) {
  Rng a(42, 7), b(42, 8), c(43, 7);
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    same_ab += x == b.next_u64();
    same_ac += x == c.next_u64();
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(Philox, CounterJumpMatchesSequentialDraws) {
  Rng seq(5, 1);
  for (int i = 0; i < 6; ++i) seq.next_u64();  // three blocks of two words
  Rng jumped(5, 1, 3);
  EXPECT_EQ(seq.next_u64(), jumped.next_u64());
}

TEST(Philox, UniformIsOpenInterval) {
  Rng r(1);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(Philox, BelowIsUniform) {
  Rng r(3);
  const int k = 7, n = 70000;
  std::array<int, k> counts{};
  for (int i = 0; i < n; ++i) {
    const auto v = r.below(k);
    ASSERT_LT(v, static_cast<std::uint64_t>(k));
    ++counts[static_cast<std::size_t>(v)];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / k) * (c - n / k) / double(n / k);
  EXPECT_LT(chi2, 22.46);  // chi-square(6) upper 0.001 point
}

TEST(Philox, ExponentialMean) {
  Rng r(9);
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += r.exponential(2.0);
  EXPECT_NEAR(sum / n, 0.5, 3.0 * 0.5 / std::sqrt(double(n)));
}

TEST(Philox, RademacherBalanced) {
  Rng r(11);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.rademacher();
    ASSERT_TRUE(z == 1.0 || z == -1.0);
    sum += z;
  }
  EXPECT_LT(std::abs(sum), 3.0 * std::sqrt(double(n)));
}

TEST(StreamTag, DistinctForDistinctInputs) {
  std::set<std::uint64_t> tags;
  for (std::uint64_t a = 0; a < 20; ++a) {
    for (std::uint64_t b = 0; b < 20; ++b) tags.insert(coxsgd::stream_tag(a, b));
  }
  EXPECT_EQ(tags.size(), 400u);
  EXPECT_EQ(coxsgd::stream_tag(1, 2, 3), coxsgd::stream_tag(1, 2, 3));
}
