#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "htq/bounds.hpp"

using namespace htq;

namespace {

const double kSqrt2 = std::sqrt(2.0);

struct Downlink {
  CapacityRegion region = onoff_downlink_region({0.5, 1.0 / 3});
  FadingModel model = onoff_downlink_model({0.5, 1.0 / 3});
};

}  // namespace

TEST(ZetaParams, Fields) {
  ZetaParams z{0.495, 0.5, 0.1};
  EXPECT_NEAR(z.zeta(), 1.005, 1e-12);
  EXPECT_NEAR(z.zeta_limit(), 0.995, 1e-12);
  EXPECT_THROW((ZetaParams{-0.1, 0, 0.1}.validate()), Error);
}

TEST(SingleServer, Examples) {
  auto det = lb_single_server({0, 0, 0.1}, 1.0);
  EXPECT_NEAR(det.dominant_term, 0.05, 1e-12);
  EXPECT_NEAR(det.raw_total, 0.05 - 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(det.total, 0.0);

  auto r = lb_single_server({0.495, 0.5, 0.1}, 2.0);
  EXPECT_NEAR(r.dominant_term, 5.025, 1e-12);
  EXPECT_NEAR(r.total, 5.025 - 1.0, 1e-12);
  EXPECT_NEAR(r.ht_limit, 0.4975, 1e-12);
  EXPECT_EQ(r.kind, BoundKind::lower);
  EXPECT_NEAR(r.total, r.dominant_term - r.correction, 1e-15);

  try {
    lb_single_server({0.1, 0.1, 0.0}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::domain);
  }
}

TEST(SingleServer, ScaledApproachesLimit) {
  double prev = 1e9;
  for (double eps : {0.1, 0.01, 0.001, 1e-4}) {
    auto r = lb_single_server({0.495, 0.5, eps}, 1.0);
    const double gap = std::abs(eps * r.total - r.ht_limit);
    EXPECT_LT(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Routing, Examples) {
  auto r = lb_routing({0.495, 0.5, 0.1}, 2, 1.0);
  EXPECT_NEAR(r.total, 4.025, 1e-12);
  // sigma2(0.02) = 2 * 0.49 * 0.51
  auto s = lb_routing({2 * 0.49 * 0.51, 0.5, 0.02}, 2, 1.0);
  EXPECT_NEAR(s.total, 24.006, 2e-3);
  EXPECT_NEAR(s.total, (0.4998 + 0.5 + 0.0004) / 0.04 - 1.0, 1e-12);
  auto d = lb_routing({0, 0, 0.1}, 2, 1.0);
  EXPECT_NEAR(d.raw_total, 0.05 - 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(d.total, 0.0);
  EXPECT_FALSE(d.notes.empty());
}

TEST(Scheduling, DownlinkFace) {
  Downlink dl;
  auto htp = heavy_traffic_point(dl.region, {0.3, 0.2});
  EXPECT_NEAR(htp.eps[1], kSqrt2 / 12, 1e-12);
  auto r = lb_scheduling(dl.region, htp, 1, {0.21, 0.16});
  const double zeta = 0.185 + 2.0 / 144;
  EXPECT_NEAR(r.zeta, zeta, 1e-12);
  EXPECT_NEAR(r.zeta, 0.19889, 1e-5);
  EXPECT_NEAR(r.total, zeta / (2 * kSqrt2 / 12) - kSqrt2 / 6, 1e-12);
  EXPECT_NEAR(r.total, 0.6081, 1e-4);
  EXPECT_NEAR(r.ht_limit, 0.185 / 2, 1e-12);
  EXPECT_THROW(lb_scheduling(dl.region, htp, 3, {0.21, 0.16}), Error);
}

TEST(Scheduling, CoordinateFaceReducesToSingleQueue) {
  Downlink dl;
  auto htp = heavy_traffic_point(dl.region, {0.3, 0.2});
  auto r = lb_scheduling(dl.region, htp, 2, {0.21, 0.16});  // c = (1, 0)
  EXPECT_NEAR(r.zeta, 0.21 + 0.2 * 0.2, 1e-12);
  auto s = lb_single_server({0.21, 0.0, 0.2}, dl.region.face(2).b);
  EXPECT_NEAR(r.total, s.total, 1e-12);
}

TEST(NthMoment, Examples) {
  ZetaParams z{0.495, 0.5, 0.1};
  auto n1 = lb_nth_moment(z, 1);
  EXPECT_NEAR(n1.dominant_term, z.zeta() / 2, 1e-15);
  EXPECT_NEAR(n1.dominant_term, z.eps * lb_single_server(z, 1.0).dominant_term, 1e-12);
  EXPECT_TRUE(n1.asymptotic_only);
  EXPECT_DOUBLE_EQ(n1.correction, 0.0);
  EXPECT_NEAR(lb_nth_moment({1.0, 0.0, 1e-9}, 2).dominant_term, 0.5, 1e-12);
  EXPECT_NEAR(lb_nth_moment({0.8, 0.0, 1e-9}, 3).dominant_term, 0.384, 1e-12);
  EXPECT_NEAR(ub_nth_moment({1.0, 0.0, 1e-9}, 2).dominant_term, 0.5, 1e-12);
  EXPECT_EQ(ub_nth_moment(z, 2).kind, BoundKind::upper);
  try {
    lb_nth_moment(z, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::domain);
  }
  EXPECT_NEAR(full_vector_second_moment_limit(0.8), 0.32, 1e-15);
}

TEST(NthMoment, FactorialOracle) {
  for (int n = 1; n <= 6; ++n) {
    double fact = std::tgamma(n + 1.0);
    EXPECT_NEAR(lb_nth_moment({0.7, 0.2, 0.01}, n).ht_limit, fact * std::pow(0.45, n), 1e-12);
  }
}

TEST(Jsq, Examples) {
  ZetaParams z{0.495, 0.5, 0.1};
  auto zero = ub_jsq(z, 2, 1.0, 0.0);
  EXPECT_NEAR(zero.total, z.zeta() / 0.2 + 0.5, 1e-12);
  auto r = ub_jsq(z, 2, 1.0, 1.5);
  const double mid = 2 * std::sqrt(1.5 * kSqrt2 / 0.1);
  EXPECT_NEAR(mid, 9.21, 5e-3);
  EXPECT_NEAR(r.total, 5.025 + mid + 0.5, 1e-12);
  EXPECT_NEAR(r.total, r.dominant_term + r.correction, 1e-15);
  EXPECT_THROW(ub_jsq({0.495, 0.5, 0.0}, 2, 1.0, 1.0), Error);
}

TEST(Jsq, GapVanishesAfterScaling) {
  double prev = 1e9;
  for (double eps : {0.1, 0.01, 1e-3, 1e-4, 1e-5}) {
    ZetaParams z{0.495, 0.5, eps};
    const double gap = eps * (ub_jsq(z, 2, 1.0, 1.5).total - lb_routing(z, 2, 1.0).total);
    EXPECT_LT(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(MaxWeight, CoordinateFaceReduction) {
  Downlink dl;
  auto htp = heavy_traffic_point(dl.region, {0.3, 0.2});
  const double gamma = 0.25, theta = 0.7;
  auto r = ub_mws(dl.region, htp, 2, {0.21, 0.16}, 1.0, 0.0, gamma, theta);
  const double b = 0.5;
  EXPECT_NEAR(r.correction, (b * b + 1.0) / (2 * gamma) + 0.5, 1e-12);
}

TEST(MaxWeight, DownlinkPlugIn) {
  Downlink dl;
  auto lam = approach_along_normal(dl.region, 1, face_centroid(dl.region, 1), 0.05);
  auto htp = heavy_traffic_point(dl.region, lam);
  const double gamma = fading_gamma_k(dl.model, dl.region, 1);
  const double theta = fading_cone_angle_k(dl.model, dl.region, 1);
  EXPECT_NEAR(gamma, 1 / kSqrt2, 1e-9);
  EXPECT_NEAR(theta, std::numbers::pi / 4, 1e-9);
  const RateVector s2{lam[0] * (1 - lam[0]), lam[1] * (1 - lam[1])};
  auto r = ub_mws(dl.region, htp, 1, s2, 1.0, 2.0, gamma, theta);
  // independent recomputation of the correction
  const double b = kSqrt2 / 3, cs = kSqrt2, e = 0.05;
  const double bsq = b * b + cs * cs;
  const double expect = std::sqrt(2.0 * bsq / (e * gamma)) + bsq / (2 * gamma) + cs / 2 +
                        std::sqrt(2.0 * 1.0 / (e / kSqrt2));
  EXPECT_NEAR(r.correction, expect, 1e-9);
  EXPECT_FALSE(r.out_of_regime);
  auto far = ub_mws(dl.region, heavy_traffic_point(dl.region, {0.05, 0.05}), 1, s2, 1.0, 2.0, gamma, theta);
  EXPECT_TRUE(far.out_of_regime);
  EXPECT_THROW(ub_mws(dl.region, htp, 1, s2, 1.0, 2.0, gamma, 0.0), Error);
}

TEST(MaxWeight, ScaledLimit) {
  Downlink dl;
  auto anchor = face_centroid(dl.region, 1);
  double prev = 1e9;
  for (double eps : {0.1, 1e-2, 1e-3, 1e-4, 1e-6}) {
    auto htp = heavy_traffic_point(dl.region, approach_along_normal(dl.region, 1, anchor, eps));
    auto r = ub_mws(dl.region, htp, 1, {0.2, 0.2}, 1.0, 1.0, 0.7, 0.7);
    const double gap = std::abs(eps * r.total - r.ht_limit);
    EXPECT_LT(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 0.01);
}

TEST(Fading, DownlinkVariance) {
  Downlink dl;
  auto beta = fading_face_service_dist(dl.model, dl.region, 1);
  EXPECT_NEAR(beta.variance(), 1.0 / 9, 1e-12);
  auto lam = approach_along_normal(dl.region, 1, face_centroid(dl.region, 1), 0.05);
  auto htp = heavy_traffic_point(dl.region, lam);
  const RateVector s2{lam[0] * (1 - lam[0]), lam[1] * (1 - lam[1])};
  auto fb = fading_bounds(dl.region, dl.model, htp, 1, s2, 1.0, 1.0, 1 / kSqrt2, std::numbers::pi / 4);
  const double sig = 0.5 * s2[0] + 0.5 * s2[1];
  EXPECT_NEAR(fb.lower.zeta, sig + 1.0 / 9 + 0.0025, 1e-12);
  EXPECT_NEAR(fb.lower.total, fb.lower.zeta / 0.1 - 0.5, 1e-12);
  EXPECT_TRUE(fb.upper.structural_estimate);
  EXPECT_NEAR(fb.upper.constants.at("b_state_max"), 1 / kSqrt2, 1e-12);
  EXPECT_NEAR(fb.lower.ht_limit, (sig + 1.0 / 9) / 2, 1e-12);
  EXPECT_NEAR(fb.lower.dominant_term, fb.upper.dominant_term, 1e-15);
}

TEST(Fading, OneStateMatchesStatic) {
  ScheduleSet S({{0, 0}, {2, 0}, {0, 1}});
  FadingModel f({"only"}, {1.0}, {S});
  auto static_region = hull_halfspaces(S);
  auto fregion = fading_region(f);
  ASSERT_EQ(fregion.K(), static_region.K());
  auto htp = heavy_traffic_point(static_region, {0.5, 0.3});
  for (std::size_t k = 0; k < static_region.K(); ++k) {
    const double g = gamma_k(static_region, S, k), th = cone_angle_k(static_region, S, k);
    EXPECT_NEAR(fading_gamma_k(f, fregion, k), g, 1e-12);
    EXPECT_NEAR(fading_cone_angle_k(f, fregion, k), th, 1e-9);
    auto fb = fading_bounds(fregion, f, heavy_traffic_point(fregion, {0.5, 0.3}), k, {0.25, 0.21}, 2.0, 1.0, g, th);
    auto lo = lb_scheduling(static_region, htp, k, {0.25, 0.21});
    auto up = ub_mws(static_region, htp, k, {0.25, 0.21}, 2.0, 1.0, g, th);
    EXPECT_NEAR(fb.lower.zeta, lo.zeta, 1e-12);
    EXPECT_NEAR(fb.lower.dominant_term, lo.dominant_term, 1e-12);
    EXPECT_NEAR(fb.upper.total, up.total, 1e-9);
    // the fading correction uses S_max / 2 in place of b / 2
    EXPECT_NEAR(fb.lower.correction, 1.0, 1e-15);
  }
}

TEST(FaceFrequency, Checks) {
  SteadyStateEstimate est;
  est.mean = 0.9;
  est.ci_low = 0.89;
  est.ci_high = 0.91;
  auto skip = pi_k_bound_check(est, 0.8, 0.5);
  EXPECT_TRUE(skip.out_of_regime);
  EXPECT_FALSE(skip.checked);
  auto ok = pi_k_bound_check(est, 0.05, 0.5);
  EXPECT_TRUE(ok.checked);
  EXPECT_TRUE(ok.pass);
  auto bad = pi_k_bound_check(est, 0.01, 0.5);
  EXPECT_FALSE(bad.pass);
  SteadyStateEstimate one;
  one.mean = one.ci_low = one.ci_high = 1.0;
  EXPECT_TRUE(pi_k_bound_check(one, 0.001, 0.5).pass);
}

TEST(Report, Serialization) {
  auto r = lb_routing({0.495, 0.5, 0.1}, 2, 1.0);
  auto j = r.to_json();
  EXPECT_EQ(j["kind"], "lower");
  EXPECT_NEAR(j["total"].get<double>(), 4.025, 1e-12);
  EXPECT_EQ(j["constants"]["L"].get<double>(), 2.0);
  const auto row = r.csv_row();
  const auto header = BoundReport::csv_header();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(row.substr(0, 20), "routing_lower,lower,");
}
