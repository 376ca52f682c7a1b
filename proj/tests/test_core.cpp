#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "htq/core.hpp"

using namespace htq;

TEST(Inner, Examples) {
  EXPECT_DOUBLE_EQ(inner(RateVector{1, 0}, RateVector{0, 1}), 0.0);
  EXPECT_NEAR(inner(RateVector{3, 1}, RateVector{1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}), 4 / std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(inner(RateVector{2, 2}, RateVector{2, 2}), 8.0);
}

TEST(Inner, LengthMismatchThrows) {
  try {
    inner(RateVector{1, 2}, RateVector{1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension);
  }
}

TEST(Norm, Examples) {
  EXPECT_DOUBLE_EQ(norm(RateVector{0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(norm(RateVector{3, 4}), 5.0);
  EXPECT_NEAR(norm(RateVector{1, -1}), std::sqrt(2.0), 1e-15);
}

TEST(Angle, Examples) {
  EXPECT_NEAR(angle(RateVector{1, 0}, RateVector{0, 1}), std::numbers::pi / 2, 1e-15);
  EXPECT_NEAR(angle(RateVector{1, 1}, RateVector{2, 2}), 0.0, 1e-7);
  EXPECT_NEAR(angle(RateVector{1, 0}, RateVector{1, 1}), std::numbers::pi / 4, 1e-15);
}

TEST(Angle, ParallelIsClampedNotNan) {
  const RateVector x{0.1, 0.7, 0.3};
  RateVector y = x;
  for (auto& v : y) v *= 3.0;
  EXPECT_FALSE(std::isnan(angle(x, y)));
}

TEST(Angle, ZeroVectorThrows) {
  try {
    angle(RateVector{0, 0}, RateVector{1, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::undefined_angle);
  }
}

TEST(Property, CauchySchwarz) {
  RandomStream rng(11, 0);
  for (int i = 0; i < 10000; ++i) {
    RateVector x(3), y(3);
    for (auto& v : x) v = rng.uniform() * 10 - 5;
    for (auto& v : y) v = rng.uniform() * 10 - 5;
    EXPECT_LE(std::abs(inner(x, y)), norm(x) * norm(y) * (1 + 1e-14));
  }
}

TEST(DistMoments, Examples) {
  auto [m1, v1] = dist_moments(BoundedIntDist::bernoulli(0.5));
  EXPECT_NEAR(m1, 0.5, 1e-12);
  EXPECT_NEAR(v1, 0.25, 1e-12);
  auto [m2, v2] = dist_moments(BoundedIntDist::point(3));
  EXPECT_NEAR(m2, 3.0, 1e-12);
  EXPECT_NEAR(v2, 0.0, 1e-12);
  const double p = 0.45;
  BoundedIntDist bin({{0, (1 - p) * (1 - p)}, {1, 2 * p * (1 - p)}, {2, p * p}});
  auto [m3, v3] = dist_moments(bin);
  EXPECT_NEAR(m3, 0.9, 1e-12);
  EXPECT_NEAR(v3, 0.495, 1e-12);
}

TEST(DistMoments, MatchBruteForce) {
  RandomStream rng(5, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<std::int64_t, double> pmf;
    double tot = 0;
    const int n = 1 + static_cast<int>(rng.index(6));
    for (int v = 0; v < n; ++v) {
      const double w = rng.uniform() + 0.01;
      pmf[v * 2] = w;
      tot += w;
    }
    double sum = 0;
    auto last = pmf.end();
    --last;
    for (auto it = pmf.begin(); it != last; ++it) {
      it->second /= tot;
      sum += it->second;
    }
    last->second = 1.0 - sum;
    BoundedIntDist d(pmf);
    double m = 0, m2 = 0;
    for (auto [v, pr] : pmf) {
      m += v * pr;
      m2 += v * v * pr;
    }
    EXPECT_NEAR(d.mean(), m, 1e-12);
    EXPECT_NEAR(d.variance(), m2 - m * m, 1e-12);
    EXPECT_EQ(d.max_value(), pmf.rbegin()->first);
  }
}

TEST(Dist, InvalidPmfRejected) {
  EXPECT_THROW(BoundedIntDist({{0, 0.5}, {1, 0.4}}), Error);
  EXPECT_THROW(BoundedIntDist({{-1, 1.0}}), Error);
  EXPECT_THROW(BoundedIntDist::bernoulli(1.5), Error);
}

TEST(Dist, Constructors) {
  auto b = BoundedIntDist::binomial(2, 0.45);
  EXPECT_NEAR(b.mean(), 0.9, 1e-12);
  EXPECT_NEAR(b.variance(), 0.495, 1e-12);
  auto u = BoundedIntDist::uniform(1, 3);
  EXPECT_NEAR(u.mean(), 2.0, 1e-12);
  EXPECT_NEAR(u.variance(), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(u.max_value(), 3);
}

TEST(Sample, PointMassAndCertainBernoulli) {
  RandomStream rng(1, 2);
  auto pt = BoundedIntDist::point(2);
  auto one = BoundedIntDist::bernoulli(1.0);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(sample(pt, rng), 2);
    EXPECT_EQ(sample(one, rng), 1);
  }
}

TEST(Sample, BernoulliMean) {
  RandomStream rng(2024, 3);
  auto d = BoundedIntDist::bernoulli(0.3);
  const int n = 1000000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += static_cast<double>(sample(d, rng));
  EXPECT_NEAR(s / n, 0.3, 0.003);
}

TEST(Sample, FrequenciesMatchPmf) {
  RandomStream rng(77, 0);
  BoundedIntDist d({{0, 0.2}, {1, 0.5}, {3, 0.3}});
  std::vector<int> cnt(4, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) cnt[static_cast<std::size_t>(sample(d, rng))]++;
  EXPECT_EQ(cnt[2], 0);
  EXPECT_NEAR(cnt[0] / double(n), 0.2, 0.005);
  EXPECT_NEAR(cnt[1] / double(n), 0.5, 0.005);
  EXPECT_NEAR(cnt[3] / double(n), 0.3, 0.005);
}

TEST(RandomStream, Deterministic) {
  RandomStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.engine()(), b.engine()());
}

TEST(RandomStream, DistinctStreamsUncorrelated) {
  RandomStream a(42, 0), b(42, 1);
  const int n = 100000;
  double sa = 0, sb = 0, sab = 0;
  int same = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.uniform(), y = b.uniform();
    sa += x;
    sb += y;
    sab += x * y;
    same += (x == y);
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  EXPECT_LT(std::abs(cov / (1.0 / 12.0)), 0.015);
  EXPECT_EQ(same, 0);
}

TEST(Overflow, CheckedAdd) {
  EXPECT_EQ(checked_add(2, 3), 5);
  EXPECT_THROW(checked_add(std::numeric_limits<std::int64_t>::max(), 1), Error);
}
