#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace htq {

enum class ErrorCode {
  dimension,
  undefined_angle,
  normalization,
  unsupported_dimension,
  non_coordinate_convex,
  not_interior,
  degenerate_face,
  too_large,
  invalid_state,
  config,
  domain,
  instability,
  truncation,
  invariant_violation,
  index,
  overflow,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::dimension: return "dimension";
    case ErrorCode::undefined_angle: return "undefined-angle";
    case ErrorCode::normalization: return "normalization";
    case ErrorCode::unsupported_dimension: return "unsupported-dimension";
    case ErrorCode::non_coordinate_convex: return "non-coordinate-convex";
    case ErrorCode::not_interior: return "not-interior";
    case ErrorCode::degenerate_face: return "degenerate-face";
    case ErrorCode::too_large: return "too-large";
    case ErrorCode::invalid_state: return "invalid-state";
    case ErrorCode::config: return "config";
    case ErrorCode::domain: return "domain";
    case ErrorCode::instability: return "instability";
    case ErrorCode::truncation: return "truncation";
    case ErrorCode::invariant_violation: return "invariant-violation";
    case ErrorCode::index: return "index";
    case ErrorCode::overflow: return "overflow";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

using QueueVector = std::vector<std::int64_t>;
using RateVector = std::vector<double>;

template <class X, class Y>
double inner(const X& x, const Y& y) {
  if (x.size() != y.size())
    throw Error(ErrorCode::dimension, "inner: length mismatch " + std::to_string(x.size()) +
                                          " vs " + std::to_string(y.size()));
  double acc = 0.0;
  for (std::size_t l = 0; l < x.size(); ++l)
    acc += static_cast<double>(x[l]) * static_cast<double>(y[l]);
  return acc;
}

template <class X>
double norm(const X& x) {
  double acc = 0.0;
  for (auto v : x) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

template <class X, class Y>
double angle(const X& x, const Y& y) {
  const double nx = norm(x), ny = norm(y);
  if (nx == 0.0 || ny == 0.0) throw Error(ErrorCode::undefined_angle, "angle of a zero vector");
  const double cosv = std::clamp(inner(x, y) / (nx * ny), -1.0, 1.0);
  return std::acos(cosv);
}

inline RateVector to_rate(const QueueVector& q) { return RateVector(q.begin(), q.end()); }

// Deterministic random stream keyed by (seed, stream_id).
class RandomStream {
 public:
  RandomStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x68747175u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // uniform in [0, 1) with 53 random mantissa bits
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n) by multiply-shift; bias at most n / 2^64
  std::size_t index(std::size_t n) {
    if (n <= 1) return 0;
    return static_cast<std::size_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

// Finite-support pmf on {0, ..., max_value}.
class BoundedIntDist {
 public:
  BoundedIntDist() : BoundedIntDist(std::map<std::int64_t, double>{{0, 1.0}}) {}

  explicit BoundedIntDist(const std::map<std::int64_t, double>& pmf) {
    if (pmf.empty()) throw Error(ErrorCode::config, "empty pmf");
    double total = 0.0;
    for (auto [v, p] : pmf) {
      if (v < 0) throw Error(ErrorCode::config, "pmf support must be nonnegative");
      if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorCode::config, "pmf probability invalid");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw Error(ErrorCode::config, "pmf sums to " + std::to_string(total));
    std::int64_t hi = 0;
    for (auto [v, p] : pmf)
      if (p > 0.0) hi = std::max(hi, v);
    prob_.assign(static_cast<std::size_t>(hi + 1), 0.0);
    for (auto [v, p] : pmf)
      if (v <= hi) prob_[static_cast<std::size_t>(v)] += p;
    cdf_.resize(prob_.size());
    double run = 0.0;
    for (std::size_t v = 0; v < prob_.size(); ++v) {
      run += prob_[v];
      cdf_[v] = run;
    }
    cdf_.back() = 1.0;
    mean_ = 0.0;
    for (std::size_t v = 0; v < prob_.size(); ++v) mean_ += prob_[v] * static_cast<double>(v);
    variance_ = 0.0;
    for (std::size_t v = 0; v < prob_.size(); ++v) {
      const double d = static_cast<double>(v) - mean_;
      variance_ += prob_[v] * d * d;
    }
  }

  static BoundedIntDist point(std::int64_t v) { return BoundedIntDist({{v, 1.0}}); }

  static BoundedIntDist bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::config, "bernoulli p outside [0,1]");
    return BoundedIntDist({{0, 1.0 - p}, {1, p}});
  }

  static BoundedIntDist binomial(int n, double p) {
    if (n < 0) throw Error(ErrorCode::config, "binomial n < 0");
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::config, "binomial p outside [0,1]");
    std::map<std::int64_t, double> pmf;
    double coef = 1.0;
    for (int k = 0; k <= n; ++k) {
      if (k > 0) coef = coef * (n - k + 1) / k;
      pmf[k] = coef * std::pow(p, k) * std::pow(1.0 - p, n - k);
    }
    double total = 0.0;
    for (auto& kv : pmf) total += kv.second;
    for (auto& kv : pmf) kv.second /= total;
    return BoundedIntDist(pmf);
  }

  static BoundedIntDist uniform(std::int64_t lo, std::int64_t hi) {
    if (lo < 0 || hi < lo) throw Error(ErrorCode::config, "uniform needs 0 <= lo <= hi");
    std::map<std::int64_t, double> pmf;
    const double w = 1.0 / static_cast<double>(hi - lo + 1);
    for (auto v = lo; v <= hi; ++v) pmf[v] = w;
    return BoundedIntDist(pmf);
  }

  double mean() const { return mean_; }
  double variance() const { return variance_; }
  std::int64_t max_value() const { return static_cast<std::int64_t>(prob_.size()) - 1; }
  double prob(std::int64_t v) const {
    return (v < 0 || v > max_value()) ? 0.0 : prob_[static_cast<std::size_t>(v)];
  }
  const std::vector<double>& probs() const { return prob_; }

  std::int64_t sample(RandomStream& rng) const {
    const std::size_t n = cdf_.size();
    if (n == 1) return 0;
    const double u = rng.uniform();
    std::size_t v = 0;
    while (v + 1 < n && u >= cdf_[v]) ++v;
    return static_cast<std::int64_t>(v);
  }

 private:
  std::vector<double> prob_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
  double variance_ = 0.0;
};

inline std::pair<double, double> dist_moments(const BoundedIntDist& d) {
  return {d.mean(), d.variance()};
}

inline std::int64_t sample(const BoundedIntDist& d, RandomStream& s) { return d.sample(s); }

// Real-valued finite distribution (values with probabilities), duplicates aggregated.
struct RealDist {
  std::vector<std::pair<double, double>> atoms;  // (value, prob), sorted by value

  double mean() const {
    double m = 0.0;
    for (auto [v, p] : atoms) m += v * p;
    return m;
  }
  double variance() const {
    const double m = mean();
    double s = 0.0;
    for (auto [v, p] : atoms) s += p * (v - m) * (v - m);
    return s;
  }
};

inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw Error(ErrorCode::overflow, "queue length overflow");
  return r;
}

}  // namespace htq
