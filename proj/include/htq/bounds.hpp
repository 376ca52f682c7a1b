#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "htq/core.hpp"
#include "htq/geometry.hpp"
#include "htq/stats.hpp"

namespace htq {

struct ZetaParams {
  double sigma2 = 0.0;  // arrival variance term
  double nu2 = 0.0;     // service variance term
  double eps = 0.0;

  double zeta() const { return sigma2 + nu2 + eps * eps; }
  // limit of zeta with sigma2, nu2 frozen
  double zeta_limit() const { return sigma2 + nu2; }

  void validate() const {
    if (!(sigma2 >= 0.0) || !(nu2 >= 0.0)) throw Error(ErrorCode::domain, "variance terms must be nonnegative");
    if (!(eps > 0.0)) throw Error(ErrorCode::domain, "eps must be positive");
  }
};

enum class BoundKind { lower, upper };

struct BoundReport {
  BoundKind kind = BoundKind::lower;
  std::string name;
  int n = 1;
  double dominant_term = 0.0;
  double correction = 0.0;
  double total = 0.0;      // floored at 0 for lower bounds
  double raw_total = 0.0;  // dominant -/+ correction, unfloored
  double eps = 0.0;
  double zeta = 0.0;
  double ht_limit = 0.0;  // eps^n * bound as eps -> 0
  bool asymptotic_only = false;
  bool structural_estimate = false;
  bool out_of_regime = false;
  std::map<std::string, double> constants;
  std::vector<std::string> notes;

  nlohmann::json to_json() const {
    return {{"kind", kind == BoundKind::lower ? "lower" : "upper"},
            {"name", name},
            {"n", n},
            {"dominant_term", dominant_term},
            {"correction", correction},
            {"total", total},
            {"raw_total", raw_total},
            {"eps", eps},
            {"zeta", zeta},
            {"ht_limit", ht_limit},
            {"asymptotic_only", asymptotic_only},
            {"structural_estimate", structural_estimate},
            {"out_of_regime", out_of_regime},
            {"constants", constants},
            {"notes", notes}};
  }

  static std::string csv_header() {
    return "name,kind,n,eps,zeta,dominant_term,correction,total,raw_total,ht_limit,asymptotic_only";
  }
  std::string csv_row() const {
    return fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}", name,
                       kind == BoundKind::lower ? "lower" : "upper", n, eps, zeta, dominant_term, correction, total,
                       raw_total, ht_limit, asymptotic_only ? 1 : 0);
  }
};

namespace detail {

inline BoundReport make_lower(std::string name, const ZetaParams& z, double correction) {
  z.validate();
  BoundReport r;
  r.kind = BoundKind::lower;
  r.name = std::move(name);
  r.eps = z.eps;
  r.zeta = z.zeta();
  r.dominant_term = r.zeta / (2.0 * z.eps);
  r.correction = correction;
  r.raw_total = r.dominant_term - correction;
  r.total = std::max(0.0, r.raw_total);
  if (r.raw_total < 0.0) r.notes.push_back("negative raw bound floored at 0");
  r.ht_limit = z.zeta_limit() / 2.0;
  r.constants = {{"sigma2", z.sigma2}, {"nu2", z.nu2}};
  return r;
}

inline BoundReport make_upper(std::string name, const ZetaParams& z, double correction) {
  z.validate();
  BoundReport r;
  r.kind = BoundKind::upper;
  r.name = std::move(name);
  r.eps = z.eps;
  r.zeta = z.zeta();
  r.dominant_term = r.zeta / (2.0 * z.eps);
  r.correction = correction;
  r.raw_total = r.total = r.dominant_term + correction;
  r.ht_limit = z.zeta_limit() / 2.0;
  r.constants = {{"sigma2", z.sigma2}, {"nu2", z.nu2}};
  return r;
}

inline double c_min_positive(const RateVector& c) {
  double m = std::numeric_limits<double>::infinity();
  for (double x : c)
    if (x > 1e-12) m = std::min(m, x);
  return m;
}

inline double weighted_sigma2(const RateVector& c, const RateVector& sigma2) {
  if (c.size() != sigma2.size()) throw Error(ErrorCode::dimension, "sigma2 vector length mismatch");
  double s = 0.0;
  for (std::size_t l = 0; l < c.size(); ++l) s += c[l] * c[l] * sigma2[l];
  return s;
}

// Correction of the MaxWeight upper bound on <c,Q>.
inline double mws_correction(double b, const RateVector& c, double s_max, double n2_hat, double eps, double gamma,
                             double theta, std::map<std::string, double>& constants) {
  double cs = 0.0;
  for (double x : c) cs += x * s_max;
  const double cmin = c_min_positive(c);
  const double bsq = b * b + cs * cs;
  const double cot = std::cos(theta) / std::sin(theta);
  const double t1 = cot * std::sqrt(n2_hat * bsq / (eps * gamma));
  const double t2 = bsq / (2.0 * gamma);
  const double t3 = cs / 2.0;
  const double t4 = std::sqrt(n2_hat * s_max / (eps * cmin));
  constants["cot_theta"] = cot;
  constants["c_min"] = cmin;
  constants["b_sq_plus_cS_sq"] = bsq;
  constants["term_cone"] = t1;
  constants["term_gamma"] = t2;
  constants["term_half_cS"] = t3;
  constants["term_unused"] = t4;
  return t1 + t2 + t3 + t4;
}

}  // namespace detail

inline BoundReport lb_single_server(const ZetaParams& z, double beta_max) {
  auto r = detail::make_lower("single_server_lower", z, beta_max / 2.0);
  r.constants["beta_max"] = beta_max;
  return r;
}

inline BoundReport lb_routing(const ZetaParams& z, std::size_t L, double s_max) {
  auto r = detail::make_lower("routing_lower", z, static_cast<double>(L) * s_max / 2.0);
  r.constants["L"] = static_cast<double>(L);
  r.constants["s_max"] = s_max;
  return r;
}

inline ZetaParams scheduling_zeta(const CapacityRegion& region, const HeavyTrafficPoint& htp, std::size_t k,
                                  const RateVector& sigma2_vec, double nu2 = 0.0) {
  const auto& h = region.face(k);
  if (k >= htp.eps.size()) throw Error(ErrorCode::index, "face index out of range for the heavy-traffic point");
  return {detail::weighted_sigma2(h.c, sigma2_vec), nu2, htp.eps[k]};
}

inline BoundReport lb_scheduling(const CapacityRegion& region, const HeavyTrafficPoint& htp, std::size_t k,
                                 const RateVector& sigma2_vec) {
  const auto z = scheduling_zeta(region, htp, k, sigma2_vec);
  auto r = detail::make_lower("scheduling_lower", z, region.face(k).b / 2.0);
  r.constants["face"] = static_cast<double>(k + 1);
  r.constants["b"] = region.face(k).b;
  return r;
}

inline BoundReport nth_moment_dominant(BoundKind kind, const ZetaParams& z, int n) {
  if (n < 1) throw Error(ErrorCode::domain, "moment order must be >= 1");
  BoundReport r;
  r.kind = kind;
  r.name = kind == BoundKind::lower ? "nth_moment_lower" : "nth_moment_upper";
  r.n = n;
  r.eps = z.eps;
  r.zeta = z.zeta();
  double fact = 1.0;
  for (int i = 2; i <= n; ++i) fact *= i;
  r.dominant_term = fact * std::pow(r.zeta / 2.0, n);
  r.correction = 0.0;
  r.total = r.raw_total = r.dominant_term;
  r.ht_limit = fact * std::pow(z.zeta_limit() / 2.0, n);
  r.asymptotic_only = true;
  r.notes.push_back(kind == BoundKind::lower ? "unquantified vanishing term B_n omitted"
                                             : "unquantified vanishing term omitted");
  r.notes.push_back("dominant term bounds eps^n E[.^n] in the limit");
  return r;
}

inline BoundReport lb_nth_moment(const ZetaParams& z, int n) {
  z.validate();
  return nth_moment_dominant(BoundKind::lower, z, n);
}

inline BoundReport ub_nth_moment(const ZetaParams& z, int n) {
  if (n < 1) throw Error(ErrorCode::domain, "moment order must be >= 1");
  return nth_moment_dominant(BoundKind::upper, z, n);
}

// Full-vector second moment limit: eps^2 E[||Q||^2] -> zeta^2 / 2.
inline double full_vector_second_moment_limit(double zeta) { return zeta * zeta / 2.0; }

inline BoundReport ub_jsq(const ZetaParams& z, std::size_t L, double s_max, double n2_hat) {
  if (!(n2_hat >= 0.0)) throw Error(ErrorCode::domain, "n2_hat must be nonnegative");
  z.validate();
  const double Ld = static_cast<double>(L);
  const double corr = Ld * std::sqrt(n2_hat * std::sqrt(Ld) * s_max / z.eps) + s_max / 2.0;
  auto r = detail::make_upper("jsq_upper", z, corr);
  r.constants["L"] = Ld;
  r.constants["s_max"] = s_max;
  r.constants["n2_hat"] = n2_hat;
  r.notes.push_back("correction uses the simulated perpendicular second moment n2_hat");
  return r;
}

inline BoundReport ub_mws(const CapacityRegion& region, const HeavyTrafficPoint& htp, std::size_t k,
                          const RateVector& sigma2_vec, double s_max, double n2_hat, double gamma_k, double theta_k) {
  if (!(n2_hat >= 0.0)) throw Error(ErrorCode::domain, "n2_hat must be nonnegative");
  if (!(theta_k > 0.0 && theta_k <= std::numbers::pi / 2 + 1e-12)) throw Error(ErrorCode::domain, "theta outside (0, pi/2]");
  if (!(gamma_k > 0.0)) throw Error(ErrorCode::domain, "gamma must be positive");
  const auto z = scheduling_zeta(region, htp, k, sigma2_vec);
  z.validate();
  const auto& h = region.face(k);
  std::map<std::string, double> consts;
  const double corr = detail::mws_correction(h.b, h.c, s_max, n2_hat, z.eps, gamma_k, theta_k, consts);
  auto r = detail::make_upper("maxweight_upper", z, corr);
  for (auto& kv : consts) r.constants[kv.first] = kv.second;
  r.constants["face"] = static_cast<double>(k + 1);
  r.constants["b"] = h.b;
  r.constants["gamma"] = gamma_k;
  r.constants["theta"] = theta_k;
  r.constants["s_max"] = s_max;
  r.constants["n2_hat"] = n2_hat;
  if (!htp.is_interior_dominant(k)) {
    r.out_of_regime = true;
    r.notes.push_back("face is not interior-dominant for this lambda");
  }
  if (!(z.eps < gamma_k)) {
    r.out_of_regime = true;
    r.notes.push_back("eps >= gamma: outside the regime of the bound");
  }
  return r;
}

struct FadingBounds {
  BoundReport lower;
  BoundReport upper;
};

inline FadingBounds fading_bounds(const CapacityRegion& fregion, const FadingModel& f, const HeavyTrafficPoint& htp,
                                  std::size_t k, const RateVector& sigma2_vec, double s_max, double n2_hat,
                                  double gamma_k, double theta_k) {
  const auto beta = fading_face_service_dist(f, fregion, k);
  const auto z = scheduling_zeta(fregion, htp, k, sigma2_vec, beta.variance());
  z.validate();
  FadingBounds out;
  out.lower = detail::make_lower("fading_lower", z, s_max / 2.0);
  out.lower.constants["var_beta"] = beta.variance();
  out.lower.constants["s_max"] = s_max;
  out.lower.constants["face"] = static_cast<double>(k + 1);

  if (!(n2_hat >= 0.0)) throw Error(ErrorCode::domain, "n2_hat must be nonnegative");
  const auto& h = fregion.face(k);
  double b_state_max = 0.0;
  for (auto [v, p] : beta.atoms) b_state_max = std::max(b_state_max, v);
  std::map<std::string, double> consts;
  const double corr = detail::mws_correction(b_state_max, h.c, s_max, n2_hat, z.eps, gamma_k, theta_k, consts);
  out.upper = detail::make_upper("fading_maxweight_upper", z, corr);
  for (auto& kv : consts) out.upper.constants[kv.first] = kv.second;
  out.upper.constants["var_beta"] = beta.variance();
  out.upper.constants["b_state_max"] = b_state_max;
  out.upper.constants["gamma"] = gamma_k;
  out.upper.constants["theta"] = theta_k;
  out.upper.constants["n2_hat"] = n2_hat;
  out.upper.constants["face"] = static_cast<double>(k + 1);
  out.upper.structural_estimate = true;
  out.upper.notes.push_back("correction follows the static MaxWeight structure with per-state gamma and theta");
  if (!htp.is_interior_dominant(k)) {
    out.upper.out_of_regime = true;
    out.upper.notes.push_back("face is not interior-dominant for this lambda");
  }
  if (!(z.eps < gamma_k)) {
    out.upper.out_of_regime = true;
    out.upper.notes.push_back("eps >= gamma: outside the regime of the bound");
  }
  return out;
}

struct FaceFrequencyCheck {
  bool checked = false;
  bool out_of_regime = false;
  bool pass = true;
  double lhs = 0.0;    // 1 - pi_hat
  double rhs = 0.0;    // eps / gamma
  double slack = 0.0;  // CI allowance

  nlohmann::json to_json() const {
    return {{"checked", checked}, {"out_of_regime", out_of_regime}, {"pass", pass},
            {"one_minus_pi_hat", lhs}, {"eps_over_gamma", rhs}, {"slack", slack}};
  }
};

// 1 - pi_hat <= eps / gamma, allowing ci_widths full CI widths of slack.
inline FaceFrequencyCheck pi_k_bound_check(const SteadyStateEstimate& pi_hat, double eps_k, double gamma_k,
                                           double ci_widths = 2.0) {
  FaceFrequencyCheck r;
  r.lhs = 1.0 - pi_hat.mean;
  r.rhs = eps_k / gamma_k;
  r.slack = ci_widths * pi_hat.width();
  if (!(eps_k > 0.0) || !(r.rhs < 1.0)) {
    r.out_of_regime = true;
    return r;
  }
  r.checked = true;
  r.pass = r.lhs <= r.rhs + r.slack;
  return r;
}

}  // namespace htq
