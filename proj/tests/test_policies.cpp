#include <gtest/gtest.h>

#include <map>

#include "htq/policies.hpp"

using namespace htq;

namespace {
ScheduleSet simplex2() { return ScheduleSet({{0, 0}, {1, 0}, {0, 1}}); }
}  // namespace

TEST(Jsq, UniqueMinimizer) {
  RandomStream rng(1, 0);
  EXPECT_EQ(jsq_route({5, 2}, 3, rng), (QueueVector{0, 3}));
}

TEST(Jsq, TwoWayTieIsFair) {
  RandomStream rng(2, 0);
  int first = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto a = jsq_route({2, 2}, 1, rng);
    ASSERT_EQ(a[0] + a[1], 1);
    first += static_cast<int>(a[0]);
  }
  EXPECT_NEAR(first / double(n), 0.5, 0.01);
}

TEST(Jsq, ThreeQueueTie) {
  RandomStream rng(3, 0);
  int c0 = 0, c1 = 0;
  for (int i = 0; i < 20000; ++i) {
    auto a = jsq_route({0, 0, 7}, 4, rng);
    EXPECT_EQ(a[2], 0);
    if (a[0] == 4) ++c0;
    if (a[1] == 4) ++c1;
  }
  EXPECT_EQ(c0 + c1, 20000);
  EXPECT_NEAR(c0 / 20000.0, 0.5, 0.015);
}

TEST(Jsq, AttainsProgramMinimum) {
  RandomStream rng(4, 0);
  for (int i = 0; i < 5000; ++i) {
    QueueVector q(3);
    for (auto& v : q) v = static_cast<std::int64_t>(rng.index(5));
    const std::int64_t at = static_cast<std::int64_t>(rng.index(4));
    auto a = jsq_route(q, at, rng);
    EXPECT_EQ(a[0] + a[1] + a[2], at);
    EXPECT_EQ(a[0] * q[0] + a[1] * q[1] + a[2] * q[2], at * *std::min_element(q.begin(), q.end()));
  }
}

TEST(MaxWeight, ZeroQueueUniformOverAll) {
  RandomStream rng(5, 0);
  std::map<QueueVector, int> cnt;
  for (int i = 0; i < 30000; ++i) cnt[maxweight({0, 0}, simplex2(), rng)]++;
  ASSERT_EQ(cnt.size(), 3u);
  for (auto& [s, c] : cnt) EXPECT_NEAR(c / 30000.0, 1.0 / 3, 0.015);
}

TEST(MaxWeight, Examples) {
  RandomStream rng(6, 0);
  EXPECT_EQ(maxweight({3, 1}, simplex2(), rng), (QueueVector{1, 0}));
  int first = 0;
  for (int i = 0; i < 20000; ++i) {
    auto s = maxweight({1, 1}, simplex2(), rng);
    EXPECT_NE(s, (QueueVector{0, 0}));
    first += static_cast<int>(s[0]);
  }
  EXPECT_NEAR(first / 20000.0, 0.5, 0.015);
}

TEST(MaxWeight, ArgmaxCertificateAndScaleInvariance) {
  RandomStream rng(7, 0);
  ScheduleSet S({{0, 0, 0}, {2, 0, 0}, {0, 1, 1}, {1, 1, 0}, {0, 0, 2}});
  for (int i = 0; i < 3000; ++i) {
    QueueVector q(3);
    for (auto& v : q) v = static_cast<std::int64_t>(rng.index(6));
    auto s = maxweight(q, S, rng);
    for (const auto& t : S.schedules()) EXPECT_GE(detail::weight(q, s), detail::weight(q, t));
    std::vector<std::size_t> t1, t2;
    QueueVector q3 = q;
    for (auto& v : q3) v *= 3;
    RandomStream r1(9, static_cast<std::uint64_t>(i)), r2(9, static_cast<std::uint64_t>(i));
    EXPECT_EQ(detail::argmax_weight_uniform(q, S.schedules(), r1, t1),
              detail::argmax_weight_uniform(q3, S.schedules(), r2, t2));
    EXPECT_EQ(t1, t2);
  }
}

TEST(MaxWeightFading, DownlinkStates) {
  auto f = onoff_downlink_model({0.5, 1.0 / 3});
  RandomStream rng(8, 0);
  auto idx = [&](const std::string& name) {
    for (std::size_t j = 0; j < f.names.size(); ++j)
      if (f.names[j] == name) return j;
    return std::size_t{999};
  };
  EXPECT_EQ(maxweight_fading({5, 5}, idx("00"), f, rng), (QueueVector{0, 0}));
  EXPECT_EQ(maxweight_fading({4, 2}, idx("11"), f, rng), (QueueVector{1, 0}));
  EXPECT_EQ(maxweight_fading({9, 1}, idx("01"), f, rng), (QueueVector{0, 1}));
  try {
    maxweight_fading({1, 1}, 17, f, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_state);
  }
}

TEST(Baselines, RandomRouting) {
  Controller c(Policy::random);
  RandomStream rng(10, 0);
  QueueVector a(2);
  int first = 0;
  for (int i = 0; i < 20000; ++i) {
    c.route({5, 2}, 1, rng, a);
    first += static_cast<int>(a[0]);
  }
  EXPECT_NEAR(first / 20000.0, 0.5, 0.015);
}

TEST(Baselines, PriorityPicksLexLargest) {
  ScheduleSet S({{0, 0}, {1, 0}, {0, 1}, {0, 2}});
  Controller c(Policy::priority);
  RandomStream rng(11, 0);
  EXPECT_EQ(c.schedule({0, 9}, S, rng), (QueueVector{1, 0}));
  EXPECT_EQ(priority_schedule(S), (QueueVector{1, 0}));
}

TEST(Baselines, RoundRobinAlternates) {
  Controller c(Policy::round_robin);
  RandomStream rng(12, 0);
  QueueVector a(3);
  for (int i = 0; i < 9; ++i) {
    c.route({0, 0, 0}, 2, rng, a);
    EXPECT_EQ(a[static_cast<std::size_t>(i % 3)], 2);
  }
}

TEST(Baselines, UnknownNameIsConfigError) {
  try {
    parse_policy("longest_queue_first");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  EXPECT_EQ(parse_policy("maxweight_fading"), Policy::maxweight_fading);
}

TEST(Baselines, WrongKindOfDecision) {
  Controller c(Policy::jsq);
  RandomStream rng(13, 0);
  EXPECT_THROW(c.schedule({0, 0}, simplex2(), rng), Error);
}
