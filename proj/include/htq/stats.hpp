#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

namespace htq {

// Two-sided 95% Student-t quantile.
inline double t_quantile_975(double df) {
  if (!(df >= 1.0)) return std::numeric_limits<double>::infinity();
  boost::math::students_t dist(df);
  return boost::math::quantile(dist, 0.975);
}

struct SteadyStateEstimate {
  double mean = 0.0;
  double variance_of_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::int64_t batches = 0;
  std::int64_t samples = 0;

  double half_width() const { return 0.5 * (ci_high - ci_low); }
  double width() const { return ci_high - ci_low; }
  bool covers(double x) const { return ci_low <= x && x <= ci_high; }
};

// Student-t interval over independent-ish batch means, taken in the given order.
inline SteadyStateEstimate from_batch_means(const std::vector<double>& means, std::int64_t samples) {
  SteadyStateEstimate e;
  e.batches = static_cast<std::int64_t>(means.size());
  e.samples = samples;
  if (means.empty()) {
    e.mean = e.ci_low = e.ci_high = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  double m = 0.0;
  for (double x : means) m += x;
  m /= static_cast<double>(means.size());
  double ss = 0.0;
  for (double x : means) ss += (x - m) * (x - m);
  e.mean = m;
  if (means.size() < 2) {
    e.variance_of_mean = std::numeric_limits<double>::infinity();
    e.ci_low = -std::numeric_limits<double>::infinity();
    e.ci_high = std::numeric_limits<double>::infinity();
    return e;
  }
  const double n = static_cast<double>(means.size());
  e.variance_of_mean = ss / (n - 1.0) / n;
  const double hw = t_quantile_975(n - 1.0) * std::sqrt(e.variance_of_mean);
  e.ci_low = m - hw;
  e.ci_high = m + hw;
  return e;
}

inline nlohmann::json to_json(const SteadyStateEstimate& e) {
  return {{"mean", e.mean},       {"variance_of_mean", e.variance_of_mean},
          {"ci_low", e.ci_low},   {"ci_high", e.ci_high},
          {"batches", e.batches}, {"samples", e.samples}};
}

}  // namespace htq
