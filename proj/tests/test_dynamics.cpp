#include <gtest/gtest.h>

#include <sstream>

#include "htq/dynamics.hpp"

using namespace htq;

namespace {

System jsq_system(double p) {
  return System::routing(BoundedIntDist::binomial(2, p),
                         {BoundedIntDist::bernoulli(0.5), BoundedIntDist::bernoulli(0.5)});
}

void expect_record_invariants(const SlotRecord& r) {
  for (std::size_t l = 0; l < r.q_before.size(); ++l) {
    EXPECT_EQ(r.q_after[l], r.q_before[l] + r.a[l] - r.s[l] + r.u[l]);
    EXPECT_EQ(r.u[l] * r.q_after[l], 0);
    EXPECT_LE(r.u[l], r.s[l]);
    EXPECT_GE(r.q_after[l], 0);
  }
}

}  // namespace

TEST(Step, Examples) {
  auto r1 = step({0, 0}, {0, 0}, {1, 1});
  EXPECT_EQ(r1.q_after, (QueueVector{0, 0}));
  EXPECT_EQ(r1.u, (QueueVector{1, 1}));
  auto r2 = step({3, 1}, {1, 0}, {0, 2});
  EXPECT_EQ(r2.q_after, (QueueVector{4, 0}));
  EXPECT_EQ(r2.u, (QueueVector{0, 1}));
  auto r3 = step({5, 5}, {2, 2}, {1, 1});
  EXPECT_EQ(r3.q_after, (QueueVector{6, 6}));
  EXPECT_EQ(r3.u, (QueueVector{0, 0}));
  EXPECT_THROW(step({1}, {1, 2}, {0}), Error);
}

TEST(Step, RandomInvariants) {
  RandomStream rng(1, 0);
  for (int i = 0; i < 20000; ++i) {
    QueueVector q(3), a(3), s(3);
    for (std::size_t l = 0; l < 3; ++l) {
      q[l] = static_cast<std::int64_t>(rng.index(5));
      a[l] = static_cast<std::int64_t>(rng.index(3));
      s[l] = static_cast<std::int64_t>(rng.index(4));
    }
    expect_record_invariants(step(q, a, s));
  }
}

TEST(Step, LindleyMonotone) {
  RandomStream rng(2, 0);
  for (int i = 0; i < 2000; ++i) {
    QueueVector q(2, 0);
    QueueVector q2 = q;
    for (int t = 0; t < 50; ++t) {
      QueueVector a(2), s(2);
      for (std::size_t l = 0; l < 2; ++l) {
        a[l] = static_cast<std::int64_t>(rng.index(3));
        s[l] = static_cast<std::int64_t>(rng.index(3));
      }
      QueueVector a2 = a;
      a2[rng.index(2)] += static_cast<std::int64_t>(rng.index(2));
      q = step(q, a, s).q_after;
      q2 = step(q2, a2, s).q_after;
      for (std::size_t l = 0; l < 2; ++l) ASSERT_LE(q[l], q2[l]);
    }
  }
}

TEST(SingleServer, Examples) {
  EXPECT_EQ(single_server_update(0, 0, 3), (std::pair<std::int64_t, std::int64_t>{0, 3}));
  EXPECT_EQ(single_server_update(2, 1, 2), (std::pair<std::int64_t, std::int64_t>{1, 0}));
  EXPECT_EQ(single_server_update(0, 2, 1), (std::pair<std::int64_t, std::int64_t>{1, 0}));
  SingleServerState st{0, BoundedIntDist::bernoulli(0.4), BoundedIntDist::binomial(2, 0.5)};
  RandomStream rng(3, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto before = st.phi;
    RandomStream copy = rng;
    const auto alpha = st.alpha_dist.sample(copy);
    const auto beta = st.beta_dist.sample(copy);
    auto [phi, chi] = single_server_step(st, rng);
    EXPECT_EQ(phi, before + alpha - beta + chi);
    EXPECT_EQ(phi * chi, 0);
  }
}

TEST(RunPath, ZeroHorizon) {
  int calls = 0;
  auto q = run_path(jsq_system(0.4), Policy::jsq, 0, 1, 0, [&](const SlotRecord&) { ++calls; }, {3, 4});
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(q, (QueueVector{3, 4}));
}

TEST(RunPath, NoInputDrainsToZero) {
  auto sys = System::routing(BoundedIntDist::point(0), {BoundedIntDist::bernoulli(0.5), BoundedIntDist::point(1)});
  auto q = run_path(sys, Policy::jsq, 500, 1, 0, [](const SlotRecord&) {}, {20, 7});
  EXPECT_EQ(q, (QueueVector{0, 0}));
}

TEST(RunPath, DeterministicGivenSeed) {
  auto sys = jsq_system(0.45);
  std::vector<QueueVector> a, b;
  run_path(sys, Policy::jsq, 5000, 77, 0, [&](const SlotRecord& r) { a.push_back(r.q_after); });
  run_path(sys, Policy::jsq, 5000, 77, 0, [&](const SlotRecord& r) { b.push_back(r.q_after); });
  EXPECT_EQ(a, b);
  std::vector<QueueVector> c;
  run_path(sys, Policy::jsq, 5000, 78, 0, [&](const SlotRecord& r) { c.push_back(r.q_after); });
  EXPECT_NE(a, c);
}

TEST(RunPath, RecordInvariantsAllSystems) {
  run_path(jsq_system(0.45), Policy::jsq, 20000, 5, 0, [](const SlotRecord& r) { expect_record_invariants(r); });
  auto f = onoff_downlink_model({0.5, 1.0 / 3});
  auto fs = System::scheduling_fading({BoundedIntDist::bernoulli(0.3), BoundedIntDist::bernoulli(0.2)}, f);
  run_path(fs, Policy::maxweight_fading, 20000, 5, 0, [&](const SlotRecord& r) {
    expect_record_invariants(r);
    ASSERT_GE(r.j, 0);
    const auto& S = f.sets[static_cast<std::size_t>(r.j)].schedules();
    EXPECT_NE(std::find(S.begin(), S.end(), r.s), S.end());
  });
  auto ss = System::scheduling({BoundedIntDist::bernoulli(0.3), BoundedIntDist::bernoulli(0.3)},
                               ScheduleSet({{0, 0}, {1, 0}, {0, 1}}));
  run_path(ss, Policy::maxweight, 20000, 5, 0, [](const SlotRecord& r) { expect_record_invariants(r); });
}

TEST(RunPath, PolicyMismatchRejected) {
  EXPECT_THROW(run_path(jsq_system(0.4), Policy::maxweight, 10, 1, 0, [](const SlotRecord&) {}), Error);
}

TEST(Chain, NoArrivals) {
  auto sol = truncated_chain_solve(BoundedIntDist::point(0), BoundedIntDist::bernoulli(0.5), 50);
  EXPECT_NEAR(sol.pmf[0], 1.0, 1e-14);
  EXPECT_NEAR(sol.mean, 0.0, 1e-14);
}

TEST(Chain, ServiceAlwaysCoversArrival) {
  auto sol = truncated_chain_solve(BoundedIntDist::bernoulli(0.7), BoundedIntDist::point(1), 50);
  EXPECT_NEAR(sol.pmf[0], 1.0, 1e-12);
  EXPECT_NEAR(sol.mean, 0.0, 1e-12);
}

// Bernoulli/Bernoulli is a birth-death chain with geometric law of ratio
// rho = p(1-q) / (q(1-p)).
TEST(Chain, BernoulliMatchesGeometric) {
  auto sol = truncated_chain_solve(BoundedIntDist::bernoulli(0.45), BoundedIntDist::bernoulli(0.5), 400);
  const double up = 0.45 * 0.5, down = 0.5 * 0.55, rho = up / down;
  EXPECT_NEAR(sol.mean, rho / (1 - rho), 1e-9);
  EXPECT_NEAR(sol.mean, 4.5, 1e-9);
  EXPECT_NEAR(sol.second_moment, rho * (1 + rho) / ((1 - rho) * (1 - rho)), 1e-8);
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(sol.pmf[static_cast<std::size_t>(i)], (1 - rho) * std::pow(rho, i), 1e-12);
  EXPECT_LT(sol.balance_residual, 1e-10);
  EXPECT_LT(sol.tail_flow, 1e-10);
}

TEST(Chain, Errors) {
  try {
    truncated_chain_solve(BoundedIntDist::bernoulli(0.5), BoundedIntDist::bernoulli(0.5), 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::instability);
  }
  try {
    truncated_chain_solve(BoundedIntDist::bernoulli(0.45), BoundedIntDist::bernoulli(0.5), 40);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::truncation);
  }
}

TEST(Chain, MatchesSimulation) {
  auto a = BoundedIntDist::binomial(2, 0.4), b = BoundedIntDist::binomial(2, 0.5);
  auto sol = truncated_chain_solve(a, b, 300);
  SingleServerState st{0, a, b};
  RandomStream rng(9, 0);
  double s = 0;
  const int n = 2000000;
  for (int i = 0; i < 1000; ++i) single_server_step(st, rng);
  for (int i = 0; i < n; ++i) s += static_cast<double>(single_server_step(st, rng).first);
  EXPECT_NEAR(s / n, sol.mean, 0.05 * sol.mean);
}

TEST(TrajectoryCsv, Format) {
  std::ostringstream os;
  TrajectoryCsv csv(os, 2);
  auto r = step({1, 0}, {0, 1}, {1, 1});
  csv(r);
  EXPECT_EQ(os.str(), "t,q_1,q_2,a_1,a_2,s_1,s_2,u_1,u_2,j\n0,1,0,0,1,1,1,0,0,\n");
}
