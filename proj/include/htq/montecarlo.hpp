#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "htq/bounds.hpp"
#include "htq/collapse.hpp"
#include "htq/dynamics.hpp"
#include "htq/geometry.hpp"
#include "htq/stats.hpp"

namespace htq {

enum class MetricKind { sum_q, cq, qperp, q_norm2, face_freq, cu };

// Per-slot observable, evaluated on the post-step state of each slot record.
struct MetricSpec {
  MetricKind kind = MetricKind::sum_q;
  RateVector c;                 // direction for cq, qperp, cu, face_freq
  int n = 1;                    // power for cq
  double r = 2.0;               // power for qperp
  double face_b = 0.0;          // static face value for face_freq
  std::vector<double> state_b;  // per channel state face values for face_freq under fading
  std::string label;

  static MetricSpec sum_q() { return {MetricKind::sum_q, {}, 1, 2.0, 0.0, {}, "sum_q"}; }
  static MetricSpec cq(RateVector c, int n = 1) {
    return {MetricKind::cq, std::move(c), n, 2.0, 0.0, {}, n == 1 ? "cq" : "cq^" + std::to_string(n)};
  }
  static MetricSpec qperp(RateVector c, double r = 2.0) {
    return {MetricKind::qperp, std::move(c), 1, r, 0.0, {}, fmt::format("qperp^{}", r)};
  }
  static MetricSpec q_norm2() { return {MetricKind::q_norm2, {}, 1, 2.0, 0.0, {}, "q_norm^2"}; }
  static MetricSpec face_freq(RateVector c, double b) {
    return {MetricKind::face_freq, std::move(c), 1, 2.0, b, {}, "face_freq"};
  }
  static MetricSpec face_freq_fading(RateVector c, std::vector<double> state_b) {
    return {MetricKind::face_freq, std::move(c), 1, 2.0, 0.0, std::move(state_b), "face_freq"};
  }
  static MetricSpec cu(RateVector c) { return {MetricKind::cu, std::move(c), 1, 2.0, 0.0, {}, "cu"}; }

  void validate(std::size_t L) const {
    const bool needs_c = kind != MetricKind::sum_q && kind != MetricKind::q_norm2;
    if (needs_c && c.size() != L) throw Error(ErrorCode::config, "metric " + label + ": direction has wrong length");
    if (kind == MetricKind::qperp) check_unit_direction(c);
    if (kind == MetricKind::cq && n < 1) throw Error(ErrorCode::config, "metric power must be >= 1");
    if (kind == MetricKind::qperp && !(r > 0.0)) throw Error(ErrorCode::config, "qperp power must be positive");
  }

  double eval(const SlotRecord& rec) const {
    const auto& q = rec.q_after;
    switch (kind) {
      case MetricKind::sum_q: {
        std::int64_t s = 0;
        for (auto v : q) s += v;
        return static_cast<double>(s);
      }
      case MetricKind::cq: {
        const double x = inner(c, q);
        if (n == 1) return x;
        if (n == 2) return x * x;
        return std::pow(x, n);
      }
      case MetricKind::qperp: {
        double par, perp2;
        detail::par_perp(q, c, par, perp2);
        if (r == 2.0) return perp2;
        return std::pow(std::sqrt(perp2), r);
      }
      case MetricKind::q_norm2: return detail::norm2(q);
      case MetricKind::face_freq: {
        const double b = state_b.empty() ? face_b : state_b.at(static_cast<std::size_t>(rec.j));
        return std::abs(inner(c, rec.s) - b) <= 1e-9 ? 1.0 : 0.0;
      }
      case MetricKind::cu: return inner(c, rec.u);
    }
    return 0.0;
  }
};

struct SimConfig {
  std::int64_t horizon = 100000;  // total slots per replication, burn-in included
  std::int64_t burn_in = -1;      // negative: 10% of horizon
  int batches = 32;
  int replications = 1;
  std::uint64_t base_seed = 1;
  std::vector<MetricSpec> metrics;
  int jobs = 0;  // 0: hardware concurrency
  bool check_invariants = false;
  RateVector invariant_c;  // empty: uniform direction
  std::optional<std::int64_t> a_max_override;
  std::optional<std::int64_t> s_max_override;
  QueueVector initial;

  std::int64_t effective_burn_in() const { return burn_in < 0 ? horizon / 10 : burn_in; }

  void validate(std::size_t L) const {
    if (horizon <= 0) throw Error(ErrorCode::config, "horizon must be positive");
    if (effective_burn_in() >= horizon) throw Error(ErrorCode::config, "burn_in must be below horizon");
    if (batches < 8) throw Error(ErrorCode::config, "at least 8 batches required");
    if (replications < 1) throw Error(ErrorCode::config, "at least one replication required");
    if (horizon - effective_burn_in() < batches) throw Error(ErrorCode::config, "fewer samples than batches");
    if (metrics.empty()) throw Error(ErrorCode::config, "no metrics requested");
    for (const auto& m : metrics) m.validate(L);
    if (!initial.empty() && initial.size() != L) throw Error(ErrorCode::config, "initial state has wrong length");
    if (!invariant_c.empty() && invariant_c.size() != L) throw Error(ErrorCode::config, "invariant direction length");
  }
};

struct EstimateResult {
  std::vector<std::string> order;
  std::map<std::string, SteadyStateEstimate> estimates;
  std::map<std::string, std::vector<std::vector<double>>> batch_means;  // [metric][replication][batch]
  std::vector<std::string> warnings;
  std::vector<CheckReport> invariant_reports;
  bool invariants_checked = false;
  std::int64_t horizon = 0;
  std::int64_t burn_in = 0;
  int replications = 0;

  const SteadyStateEstimate& at(const std::string& label) const {
    auto it = estimates.find(label);
    if (it == estimates.end()) throw Error(ErrorCode::index, "no metric named " + label);
    return it->second;
  }
  bool invariants_ok() const {
    for (const auto& r : invariant_reports)
      if (!r.ok()) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& k : order) m[k] = htq::to_json(estimates.at(k));
    nlohmann::json inv = nlohmann::json::array();
    for (const auto& r : invariant_reports) inv.push_back(r.to_json());
    return {{"metrics", m},           {"order", order},     {"warnings", warnings},
            {"invariants", inv},      {"horizon", horizon}, {"burn_in", burn_in},
            {"replications", replications}};
  }
};

namespace detail {

inline int resolve_jobs(int jobs, int work) {
  int j = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(j, 1, std::max(1, work));
}

// Runs body(i) for i in [0, n) on up to jobs threads; rethrows the first error.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
  const int nt = resolve_jobs(jobs, n);
  if (nt == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          errs[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

struct RepOutcome {
  std::vector<std::vector<double>> batch_means;  // [metric][batch]
  double first_decile_max = 0.0;
  double last_decile_max = 0.0;
  double first_decile_sum = 0.0;  // total queue summed over the decile
  double last_decile_sum = 0.0;
  std::optional<InvariantSuite> suite;
};

}  // namespace detail

// Pool batch means of independent runs; sorting first makes the result independent of run order.
inline SteadyStateEstimate pool_estimates(const std::vector<std::vector<double>>& batch_means_per_run,
                                          std::int64_t samples) {
  std::vector<double> all;
  for (const auto& v : batch_means_per_run) all.insert(all.end(), v.begin(), v.end());
  std::sort(all.begin(), all.end());
  return from_batch_means(all, samples);
}

inline EstimateResult estimate(const System& sys, Policy policy, const SimConfig& cfg) {
  cfg.validate(sys.L);
  check_policy_fits(sys, policy);
  const std::int64_t burn = cfg.effective_burn_in();
  const std::int64_t post = cfg.horizon - burn;
  const std::size_t M = cfg.metrics.size();
  const RateVector inv_c = cfg.invariant_c.empty() ? uniform_direction(sys.L) : cfg.invariant_c;
  const std::int64_t a_max = cfg.a_max_override.value_or(sys.a_max());
  const std::int64_t s_max = cfg.s_max_override.value_or(sys.s_max());
  if (cfg.check_invariants) check_unit_direction(inv_c);

  std::vector<detail::RepOutcome> outs(static_cast<std::size_t>(cfg.replications));
  detail::parallel_for(cfg.replications, cfg.jobs, [&](int rep) {
    auto& out = outs[static_cast<std::size_t>(rep)];
    if (cfg.check_invariants) out.suite.emplace(inv_c, a_max, s_max);
    std::vector<double> sums(M * static_cast<std::size_t>(cfg.batches), 0.0);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.batches), 0);
    const std::int64_t decile = std::max<std::int64_t>(1, post / 10);
    run_path(
        sys, policy, cfg.horizon, cfg.base_seed, static_cast<std::uint64_t>(rep),
        [&](const SlotRecord& r) {
          if (out.suite) (*out.suite)(r);
          if (r.t < burn) return;
          const std::int64_t i = r.t - burn;
          const auto b = static_cast<std::size_t>(i * cfg.batches / post);
          ++counts[b];
          double* row = &sums[b * M];
          for (std::size_t m = 0; m < M; ++m) row[m] += cfg.metrics[m].eval(r);
          if (i < decile || i >= post - decile) {
            std::int64_t mx = 0, tot = 0;
            for (auto v : r.q_after) {
              mx = std::max(mx, v);
              tot += v;
            }
            const bool first = i < decile;
            double& slot = first ? out.first_decile_max : out.last_decile_max;
            slot = std::max(slot, static_cast<double>(mx));
            (first ? out.first_decile_sum : out.last_decile_sum) += static_cast<double>(tot);
          }
        },
        cfg.initial);
    out.batch_means.assign(M, std::vector<double>(static_cast<std::size_t>(cfg.batches)));
    for (std::size_t b = 0; b < static_cast<std::size_t>(cfg.batches); ++b)
      for (std::size_t m = 0; m < M; ++m)
        out.batch_means[m][b] = sums[b * M + m] / static_cast<double>(counts[b]);
  });

  EstimateResult res;
  res.horizon = cfg.horizon;
  res.burn_in = burn;
  res.replications = cfg.replications;
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<std::vector<double>> per_rep;
    for (const auto& o : outs) per_rep.push_back(o.batch_means[m]);
    const auto& label = cfg.metrics[m].label;
    if (res.estimates.count(label)) throw Error(ErrorCode::config, "duplicate metric label " + label);
    res.order.push_back(label);
    res.estimates[label] = pool_estimates(per_rep, post * cfg.replications);
    res.batch_means[label] = std::move(per_rep);
  }
  const double decile_len = static_cast<double>(std::max<std::int64_t>(1, post / 10));
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const auto& o = outs[i];
    const double m0 = o.first_decile_sum / decile_len, m1 = o.last_decile_sum / decile_len;
    if (o.last_decile_max > 10.0 * std::max(1.0, o.first_decile_max))
      res.warnings.push_back(fmt::format("replication {}: queue maximum grew from {} to {}; system may be unstable",
                                         i, o.first_decile_max, o.last_decile_max));
    else if (m1 > 2.0 * m0 + 10.0)
      res.warnings.push_back(fmt::format("replication {}: mean total queue grew from {:.6g} to {:.6g}; system may be unstable",
                                         i, m0, m1));
  }
  if (cfg.check_invariants) {
    res.invariants_checked = true;
    InvariantSuite total = *outs.front().suite;
    for (std::size_t i = 1; i < outs.size(); ++i) total.merge(*outs[i].suite);
    res.invariant_reports = total.reports();
  }
  return res;
}

inline SteadyStateEstimate face_frequency(const System& sys, Policy policy, const CapacityRegion& region,
                                          std::size_t k, SimConfig cfg) {
  if (sys.kind == SystemKind::routing) throw Error(ErrorCode::config, "face frequency needs a scheduling system");
  const auto& h = region.face(k);
  cfg.metrics = {sys.kind == SystemKind::scheduling_fading
                     ? MetricSpec::face_freq_fading(h.c, fading_face_values(sys.fading, h.c))
                     : MetricSpec::face_freq(h.c, h.b)};
  return estimate(sys, policy, cfg).at("face_freq");
}

inline SteadyStateEstimate unused_service_mean(const System& sys, Policy policy, const RateVector& c,
                                               SimConfig cfg) {
  cfg.metrics = {MetricSpec::cu(c)};
  return estimate(sys, policy, cfg).at("cu");
}

// ---- heavy-traffic sweeps ----

struct SweepRow {
  double eps = 0.0;
  std::string metric;
  SteadyStateEstimate est;
  double scaled = 0.0;  // eps^p * mean
  double lower_bound = std::numeric_limits<double>::quiet_NaN();
  double upper_bound = std::numeric_limits<double>::quiet_NaN();
  double n2_hat = std::numeric_limits<double>::quiet_NaN();
  double target = std::numeric_limits<double>::quiet_NaN();  // heavy-traffic limit of scaled
};

struct SweepPoint {
  double eps = 0.0;
  EstimateResult result;
  std::vector<BoundReport> bounds;
  double zeta = 0.0;
  RateVector lambda;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepPoint> points;
  std::vector<std::string> warnings;

  // rows whose metric label matches, in eps order
  std::vector<SweepRow> metric_rows(const std::string& metric) const {
    std::vector<SweepRow> out;
    for (const auto& r : rows)
      if (r.metric == metric) out.push_back(r);
    return out;
  }

  static std::string csv_header() { return "eps,metric,mean,ci_low,ci_high,scaled,lower_bound,upper_bound,n2_hat"; }

  std::string to_csv() const {
    auto num = [](double x) { return std::isfinite(x) ? fmt::format("{:.17g}", x) : std::string(); };
    std::ostringstream os;
    os << csv_header() << "\n";
    for (const auto& r : rows)
      os << num(r.eps) << "," << r.metric << "," << num(r.est.mean) << "," << num(r.est.ci_low) << ","
         << num(r.est.ci_high) << "," << num(r.scaled) << "," << num(r.lower_bound) << "," << num(r.upper_bound)
         << "," << num(r.n2_hat) << "\n";
    return os.str();
  }

  nlohmann::json to_json() const {
    auto num = [](double x) -> nlohmann::json { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); };
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : rows)
      rs.push_back({{"eps", r.eps},
                    {"metric", r.metric},
                    {"estimate", htq::to_json(r.est)},
                    {"scaled", num(r.scaled)},
                    {"lower_bound", num(r.lower_bound)},
                    {"upper_bound", num(r.upper_bound)},
                    {"n2_hat", num(r.n2_hat)},
                    {"target", num(r.target)}});
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : points) {
      nlohmann::json b = nlohmann::json::array();
      for (const auto& x : p.bounds) b.push_back(x.to_json());
      ps.push_back({{"eps", p.eps}, {"zeta", p.zeta}, {"lambda", p.lambda}, {"bounds", b},
                    {"warnings", p.result.warnings}, {"invariants", p.result.to_json()["invariants"]}});
    }
    return {{"rows", rs}, {"points", ps}, {"warnings", warnings}};
  }
};

// Horizon for a heavy-traffic point: at least min_horizon, growing like scale / eps^2.
inline std::int64_t horizon_for(double eps, std::int64_t min_horizon, double scale) {
  const double h = scale / (eps * eps);
  if (!(h < 9e18)) throw Error(ErrorCode::config, "horizon overflow");
  return std::max(min_horizon, static_cast<std::int64_t>(std::llround(h)));
}

inline void check_eps_list(const std::vector<double>& eps) {
  if (eps.empty()) throw Error(ErrorCode::config, "empty eps list");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0)) throw Error(ErrorCode::config, "eps values must be positive");
    if (i > 0 && !(eps[i] < eps[i - 1])) throw Error(ErrorCode::config, "eps list must be strictly decreasing");
  }
}

// Arrival family used to hit a prescribed mean.
struct ArrivalFamily {
  std::string kind = "bernoulli";  // bernoulli | binomial
  int n = 1;

  BoundedIntDist with_mean(double mean) const {
    if (kind == "bernoulli") {
      if (!(mean >= 0.0 && mean <= 1.0)) throw Error(ErrorCode::domain, "bernoulli mean outside [0,1]");
      return BoundedIntDist::bernoulli(mean);
    }
    if (kind == "binomial") {
      const double p = mean / n;
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::domain, "binomial mean outside [0,n]");
      return BoundedIntDist::binomial(n, p);
    }
    throw Error(ErrorCode::config, "unknown arrival family " + kind);
  }
};

struct SweepOptions {
  std::vector<double> eps;
  SimConfig sim;              // metrics ignored; horizon used as the minimum
  double horizon_scale = 0.0;  // 0: fixed horizon
};

inline SimConfig sim_for_eps(const SweepOptions& o, double eps, std::vector<MetricSpec> metrics) {
  SimConfig c = o.sim;
  if (o.horizon_scale > 0.0) {
    c.horizon = horizon_for(eps, o.sim.horizon, o.horizon_scale);
    if (o.sim.burn_in >= 0) c.burn_in = std::max(o.sim.burn_in, c.horizon / 10);
  }
  c.metrics = std::move(metrics);
  return c;
}

inline void add_moment_rows(SweepResult& out, const SweepPoint& pt, const std::string& first_label,
                            const BoundReport& lo, const BoundReport& up, double n2) {
  const double eps = pt.eps;
  for (const auto& label : pt.result.order) {
    SweepRow row;
    row.eps = eps;
    row.metric = label;
    row.est = pt.result.at(label);
    row.n2_hat = n2;
    if (label == first_label) {
      row.scaled = eps * row.est.mean;
      row.lower_bound = lo.total;
      row.upper_bound = up.total;
      row.target = lo.ht_limit;
    } else if (label == "cq^2") {
      row.scaled = eps * eps * row.est.mean;
      row.target = 2.0 * std::pow(lo.ht_limit, 2);
    } else if (label == "q_norm^2") {
      row.scaled = eps * eps * row.est.mean;
      row.target = full_vector_second_moment_limit(2.0 * lo.ht_limit);
    } else if (label == "cu") {
      row.scaled = row.est.mean / eps;
    } else {
      row.scaled = row.est.mean;
    }
    out.rows.push_back(row);
  }
}

// JSQ-style routing sweep: total arrival mean = sum of service means - eps.
inline SweepResult routing_sweep(const std::vector<BoundedIntDist>& services, const ArrivalFamily& fam,
                                 Policy policy, const SweepOptions& o) {
  check_eps_list(o.eps);
  if (!is_routing_policy(policy)) throw Error(ErrorCode::config, "routing sweep needs a routing policy");
  const std::size_t L = services.size();
  double mu = 0.0, nu2 = 0.0;
  std::int64_t s_max = 0;
  for (const auto& s : services) {
    mu += s.mean();
    nu2 += s.variance();
    s_max = std::max(s_max, s.max_value());
  }
  const auto c = uniform_direction(L);
  SweepResult out;
  for (double eps : o.eps) {
    const auto arr = fam.with_mean(mu - eps);
    const auto sys = System::routing(arr, services);
    auto cfg = sim_for_eps(o, eps, {MetricSpec::sum_q(), MetricSpec::qperp(c, 2.0), MetricSpec::cu(c)});
    SweepPoint pt;
    pt.eps = eps;
    pt.result = estimate(sys, policy, cfg);
    const ZetaParams z{arr.variance(), nu2, eps};
    pt.zeta = z.zeta();
    pt.lambda = {arr.mean()};
    const double n2 = pt.result.at("qperp^2").mean;
    auto lo = lb_routing(z, L, static_cast<double>(s_max));
    auto up = ub_jsq(z, L, static_cast<double>(s_max), n2);
    up.constants["n2_ci_low"] = pt.result.at("qperp^2").ci_low;
    up.constants["n2_ci_high"] = pt.result.at("qperp^2").ci_high;
    if (policy != Policy::jsq) up.notes.push_back("upper bound is proven for JSQ only");
    pt.bounds = {lo, up};
    add_moment_rows(out, pt, "sum_q", lo, up, n2);
    for (const auto& w : pt.result.warnings) out.warnings.push_back(fmt::format("eps={}: {}", eps, w));
    out.points.push_back(std::move(pt));
  }
  return out;
}

// Scheduling description for a MaxWeight sweep: static set or fading model.
struct SchedulingTemplate {
  bool fading = false;
  ScheduleSet schedules;
  FadingModel model;
  ArrivalFamily family;

  CapacityRegion region() const { return fading ? fading_region(model) : hull_halfspaces(schedules); }
  std::int64_t s_max() const { return fading ? model.s_max() : schedules.s_max(); }
  double gamma(const CapacityRegion& R, std::size_t k) const {
    return fading ? fading_gamma_k(model, R, k) : gamma_k(R, schedules, k);
  }
  double theta(const CapacityRegion& R, std::size_t k) const {
    return fading ? fading_cone_angle_k(model, R, k) : cone_angle_k(R, schedules, k);
  }
  System system(const RateVector& lambda) const {
    std::vector<BoundedIntDist> arr;
    for (double x : lambda) arr.push_back(family.with_mean(x));
    return fading ? System::scheduling_fading(arr, model) : System::scheduling(arr, schedules);
  }
};

// MaxWeight sweep approaching face k along its normal from anchor: lambda = anchor - eps c.
inline SweepResult scheduling_sweep(const SchedulingTemplate& tpl, std::size_t k, const RateVector& anchor,
                                    Policy policy, const SweepOptions& o) {
  check_eps_list(o.eps);
  const auto R = tpl.region();
  const auto& h = R.face(k);
  if (anchor.size() != R.L) throw Error(ErrorCode::dimension, "anchor dimension mismatch");
  if (std::abs(inner(h.c, anchor) - h.b) > 1e-9) throw Error(ErrorCode::domain, "anchor is not on the face");
  const double gamma = tpl.gamma(R, k), theta = tpl.theta(R, k);
  const double s_max = static_cast<double>(tpl.s_max());
  SweepResult out;
  for (double eps : o.eps) {
    const auto lam = approach_along_normal(R, k, anchor, eps);
    const auto htp = heavy_traffic_point(R, lam);
    const auto sys = tpl.system(lam);
    std::vector<MetricSpec> metrics{MetricSpec::cq(h.c, 1), MetricSpec::cq(h.c, 2), MetricSpec::q_norm2(),
                                    MetricSpec::qperp(h.c, 2.0), MetricSpec::cu(h.c)};
    metrics.push_back(tpl.fading ? MetricSpec::face_freq_fading(h.c, fading_face_values(tpl.model, h.c))
                                 : MetricSpec::face_freq(h.c, h.b));
    auto cfg = sim_for_eps(o, eps, metrics);
    if (cfg.invariant_c.empty()) cfg.invariant_c = h.c;
    SweepPoint pt;
    pt.eps = htp.eps[k];
    pt.lambda = lam;
    pt.result = estimate(sys, policy, cfg);
    RateVector s2;
    for (const auto& a : sys.arrivals) s2.push_back(a.variance());
    const double n2 = pt.result.at("qperp^2").mean;
    BoundReport lo, up;
    if (tpl.fading) {
      auto fb = fading_bounds(R, tpl.model, htp, k, s2, s_max, n2, gamma, theta);
      lo = fb.lower;
      up = fb.upper;
    } else {
      lo = lb_scheduling(R, htp, k, s2);
      up = ub_mws(R, htp, k, s2, s_max, n2, gamma, theta);
    }
    up.constants["n2_ci_low"] = pt.result.at("qperp^2").ci_low;
    up.constants["n2_ci_high"] = pt.result.at("qperp^2").ci_high;
    auto pi = pi_k_bound_check(pt.result.at("face_freq"), pt.eps, gamma);
    up.constants["one_minus_pi_hat"] = pi.lhs;
    up.constants["eps_over_gamma"] = pi.rhs;
    pt.zeta = lo.zeta;
    pt.bounds = {lo, up};
    add_moment_rows(out, pt, "cq", lo, up, n2);
    for (const auto& w : pt.result.warnings) out.warnings.push_back(fmt::format("eps={}: {}", eps, w));
    out.points.push_back(std::move(pt));
  }
  return out;
}

struct PerpMomentTable {
  std::vector<double> eps;
  std::vector<double> r;
  std::vector<std::vector<SteadyStateEstimate>> est;  // [r][eps]

  // max/min of the estimated means across eps for power index i
  double ratio(std::size_t i) const {
    double mx = 0.0, mn = std::numeric_limits<double>::infinity();
    for (const auto& e : est.at(i)) {
      mx = std::max(mx, e.mean);
      mn = std::min(mn, e.mean);
    }
    return mn > 0.0 ? mx / mn : std::numeric_limits<double>::infinity();
  }
};

// E[||Q_perp||^r] per eps, for systems built by make(eps).
inline PerpMomentTable perp_moment_sweep(const std::function<System(double)>& make, Policy policy,
                                         const RateVector& c, const std::vector<double>& r_list,
                                         const SweepOptions& o) {
  check_eps_list(o.eps);
  PerpMomentTable t;
  t.eps = o.eps;
  t.r = r_list;
  t.est.assign(r_list.size(), {});
  for (double eps : o.eps) {
    std::vector<MetricSpec> ms;
    for (double r : r_list) ms.push_back(MetricSpec::qperp(c, r));
    auto res = estimate(make(eps), policy, sim_for_eps(o, eps, ms));
    for (std::size_t i = 0; i < r_list.size(); ++i) t.est[i].push_back(res.at(ms[i].label));
  }
  return t;
}

}  // namespace htq
