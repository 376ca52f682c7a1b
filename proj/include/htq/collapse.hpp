#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "htq/core.hpp"
#include "htq/dynamics.hpp"
#include "htq/stats.hpp"

namespace htq {

struct Decomposition {
  RateVector c;
  double q_par_scalar = 0.0;
  RateVector q_par;
  RateVector q_perp;
};

inline void check_unit_direction(const RateVector& c) {
  if (std::abs(norm(c) - 1.0) > 1e-9) throw Error(ErrorCode::normalization, "direction must have unit norm");
  for (double x : c)
    if (x < 0.0) throw Error(ErrorCode::normalization, "direction must be nonnegative");
}

template <class Q = QueueVector>
Decomposition decompose(const Q& q, const RateVector& c) {
  check_unit_direction(c);
  if (q.size() != c.size()) throw Error(ErrorCode::dimension, "decompose: dimension mismatch");
  Decomposition d;
  d.c = c;
  d.q_par_scalar = inner(c, q);
  d.q_par.resize(c.size());
  d.q_perp.resize(c.size());
  for (std::size_t l = 0; l < c.size(); ++l) {
    d.q_par[l] = d.q_par_scalar * c[l];
    d.q_perp[l] = static_cast<double>(q[l]) - d.q_par[l];
  }
  return d;
}

inline RateVector uniform_direction(std::size_t L) { return RateVector(L, 1.0 / std::sqrt(static_cast<double>(L))); }

namespace detail {

// <c,q> and ||q_perp||^2 without allocating.
inline void par_perp(const QueueVector& q, const RateVector& c, double& par, double& perp2) {
  par = 0.0;
  for (std::size_t l = 0; l < q.size(); ++l) par += c[l] * static_cast<double>(q[l]);
  perp2 = 0.0;
  for (std::size_t l = 0; l < q.size(); ++l) {
    const double d = static_cast<double>(q[l]) - par * c[l];
    perp2 += d * d;
  }
}

inline double norm2(const QueueVector& q) {
  double s = 0.0;
  for (auto v : q) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

inline nlohmann::json record_json(const SlotRecord& r) {
  return {{"t", r.t}, {"q_before", r.q_before}, {"a", r.a}, {"s", r.s}, {"u", r.u}, {"q_after", r.q_after}, {"j", r.j}};
}

}  // namespace detail

struct CheckReport {
  std::string name;
  std::int64_t steps = 0;
  std::int64_t violations = 0;
  double max_residual = 0.0;  // largest observed residual (or |delta| for bounded-increment checks)
  double bound = 0.0;         // tolerance or theoretical bound the residual is held to
  std::optional<SlotRecord> first_offense;

  bool ok() const { return violations == 0; }

  void merge(const CheckReport& o) {
    steps += o.steps;
    violations += o.violations;
    max_residual = std::max(max_residual, o.max_residual);
    if (!first_offense && o.first_offense) first_offense = o.first_offense;
  }

  void flag(double residual, const SlotRecord& r) {
    max_residual = std::max(max_residual, residual);
    if (residual > bound) {
      ++violations;
      if (!first_offense) first_offense = r;
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"check", name}, {"steps", steps}, {"violations", violations},
                     {"max_residual", max_residual}, {"bound", bound}};
    if (first_offense) j["first_offense"] = detail::record_json(*first_offense);
    return j;
  }
};

// |dV_perp| <= 2 sqrt(L) max(A_max, S_max) and dV_perp <= (dW - dW_par) / (2 ||Q_perp||).
class VperpChecker {
 public:
  VperpChecker(RateVector c, std::int64_t a_max, std::int64_t s_max) : c_(std::move(c)) {
    check_unit_direction(c_);
    D_ = 2.0 * std::sqrt(static_cast<double>(c_.size())) * static_cast<double>(std::max(a_max, s_max));
    bounded_.name = "vperp_bounded_increment";
    bounded_.bound = D_ + 1e-9;
    comparison_.name = "vperp_drift_comparison";
    comparison_.bound = 1e-9;
  }

  double D() const { return D_; }

  void operator()(const SlotRecord& r) {
    double p0, v0sq, p1, v1sq;
    detail::par_perp(r.q_before, c_, p0, v0sq);
    detail::par_perp(r.q_after, c_, p1, v1sq);
    const double v0 = std::sqrt(v0sq), v1 = std::sqrt(v1sq);
    const double dv = v1 - v0;
    ++bounded_.steps;
    bounded_.flag(std::abs(dv), r);
    ++comparison_.steps;
    if (v0 > 1e-9) {
      const double dW = detail::norm2(r.q_after) - detail::norm2(r.q_before);
      const double dWpar = p1 * p1 - p0 * p0;
      const double rhs = (dW - dWpar) / (2.0 * v0);
      const double scale = std::max({1.0, std::abs(rhs), std::abs(dv)});
      comparison_.flag(std::max(0.0, dv - rhs) / scale, r);
    }
  }

  const CheckReport& bounded_report() const { return bounded_; }
  const CheckReport& comparison_report() const { return comparison_; }
  void merge(const VperpChecker& o) {
    bounded_.merge(o.bounded_);
    comparison_.merge(o.comparison_);
  }

 private:
  RateVector c_;
  double D_ = 0.0;
  CheckReport bounded_, comparison_;
};

// <c,Q[t+1]> <c,U[t]> = <-Q_perp[t+1], U[t]> at every step.
class UnusedServiceChecker {
 public:
  explicit UnusedServiceChecker(RateVector c) : c_(std::move(c)) {
    check_unit_direction(c_);
    report_.name = "unused_service_identity";
    report_.bound = 1e-9;
  }

  static double residual(const SlotRecord& r, const RateVector& c) {
    double cq = 0.0, cu = 0.0;
    for (std::size_t l = 0; l < c.size(); ++l) {
      cq += c[l] * static_cast<double>(r.q_after[l]);
      cu += c[l] * static_cast<double>(r.u[l]);
    }
    double rhs = 0.0;
    for (std::size_t l = 0; l < c.size(); ++l) {
      const double perp = static_cast<double>(r.q_after[l]) - cq * c[l];
      rhs -= perp * static_cast<double>(r.u[l]);
    }
    const double lhs = cq * cu;
    return std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
  }

  void operator()(const SlotRecord& r) {
    ++report_.steps;
    report_.flag(residual(r, c_), r);
  }

  const CheckReport& report() const { return report_; }
  void merge(const UnusedServiceChecker& o) { report_.merge(o.report_); }

 private:
  RateVector c_;
  CheckReport report_;
};

// Pythagoras/orthogonality of the decomposition and non-expansive projection.
class ProjectionChecker {
 public:
  explicit ProjectionChecker(RateVector c) : c_(std::move(c)) {
    check_unit_direction(c_);
    pythagoras_.name = "pythagoras";
    pythagoras_.bound = 1e-9;
    nonexpansive_.name = "nonexpansive_projection";
    nonexpansive_.bound = 1e-9;
  }

  void operator()(const SlotRecord& r) {
    const std::size_t L = c_.size();
    double p0 = 0.0, p1 = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      p0 += c_[l] * static_cast<double>(r.q_before[l]);
      p1 += c_[l] * static_cast<double>(r.q_after[l]);
    }
    double par2 = 0.0, perp2 = 0.0, cross = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double par = p1 * c_[l];
      const double perp = static_cast<double>(r.q_after[l]) - par;
      par2 += par * par;
      perp2 += perp * perp;
      cross += par * perp;
    }
    const double w = detail::norm2(r.q_after);
    const double scale = std::max(1.0, w);
    ++pythagoras_.steps;
    pythagoras_.flag(std::max(std::abs(w - par2 - perp2), std::abs(cross)) / scale, r);

    double dpar2 = 0.0, dq2 = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double d = (p1 - p0) * c_[l];
      dpar2 += d * d;
      const double dq = static_cast<double>(r.q_after[l] - r.q_before[l]);
      dq2 += dq * dq;
    }
    ++nonexpansive_.steps;
    nonexpansive_.flag(std::max(0.0, std::sqrt(dpar2) - std::sqrt(dq2)), r);
  }

  const CheckReport& pythagoras_report() const { return pythagoras_; }
  const CheckReport& nonexpansive_report() const { return nonexpansive_; }
  void merge(const ProjectionChecker& o) {
    pythagoras_.merge(o.pythagoras_);
    nonexpansive_.merge(o.nonexpansive_);
  }

 private:
  RateVector c_;
  CheckReport pythagoras_, nonexpansive_;
};

// Exact integer identity of the slot record.
class RecordChecker {
 public:
  RecordChecker() {
    report_.name = "slot_record_identity";
    report_.bound = 0.0;
  }
  void operator()(const SlotRecord& r) {
    ++report_.steps;
    bool bad = false;
    for (std::size_t l = 0; l < r.q_before.size(); ++l) {
      if (r.q_after[l] != r.q_before[l] + r.a[l] - r.s[l] + r.u[l]) bad = true;
      if (r.u[l] * r.q_after[l] != 0 || r.u[l] > r.s[l] || r.u[l] < 0 || r.q_after[l] < 0) bad = true;
    }
    report_.flag(bad ? 1.0 : 0.0, r);
  }
  const CheckReport& report() const { return report_; }
  void merge(const RecordChecker& o) { report_.merge(o.report_); }

 private:
  CheckReport report_;
};

// All pathwise checks for one direction c.
class InvariantSuite {
 public:
  InvariantSuite(const RateVector& c, std::int64_t a_max, std::int64_t s_max)
      : vperp_(c, a_max, s_max), unused_(c), proj_(c) {}

  void operator()(const SlotRecord& r) {
    record_(r);
    vperp_(r);
    unused_(r);
    proj_(r);
  }

  void merge(const InvariantSuite& o) {
    record_.merge(o.record_);
    vperp_.merge(o.vperp_);
    unused_.merge(o.unused_);
    proj_.merge(o.proj_);
  }

  std::vector<CheckReport> reports() const {
    return {record_.report(), vperp_.bounded_report(), vperp_.comparison_report(), unused_.report(),
            proj_.pythagoras_report(), proj_.nonexpansive_report()};
  }

  bool ok() const {
    for (const auto& r : reports())
      if (!r.ok()) return false;
    return true;
  }

 private:
  RecordChecker record_;
  VperpChecker vperp_;
  UnusedServiceChecker unused_;
  ProjectionChecker proj_;
};

// Checkers over a finished path; throw on the first violated check.
template <class Range>
CheckReport vperp_drift_check(const Range& path, const RateVector& c, std::int64_t a_max, std::int64_t s_max) {
  VperpChecker chk(c, a_max, s_max);
  for (const auto& r : path) chk(r);
  for (const auto* rep : {&chk.bounded_report(), &chk.comparison_report()})
    if (!rep->ok())
      throw Error(ErrorCode::invariant_violation,
                  rep->name + " violated at t=" + std::to_string(rep->first_offense->t) + ": " +
                      detail::record_json(*rep->first_offense).dump());
  CheckReport out = chk.bounded_report();
  out.name = "vperp_drift";
  return out;
}

template <class Range>
CheckReport unused_service_identity_check(const Range& path, const RateVector& c) {
  UnusedServiceChecker chk(c);
  for (const auto& r : path) chk(r);
  if (!chk.report().ok())
    throw Error(ErrorCode::invariant_violation,
                "unused-service identity violated: " + detail::record_json(*chk.report().first_offense).dump());
  return chk.report();
}

struct HajekResult {
  double eta_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double D_hat = 0.0;
  std::int64_t c2_violations = 0;
  std::int64_t conditioned = 0;
  std::int64_t steps = 0;
  bool insufficient_data = false;
  bool negative_drift_confirmed = false;  // eta CI lies above 0
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    return {{"eta_hat", eta_hat},         {"ci_low", ci_low},
            {"ci_high", ci_high},         {"D_hat", D_hat},
            {"c2_violations", c2_violations}, {"conditioned_samples", conditioned},
            {"steps", steps},             {"insufficient_data", insufficient_data},
            {"negative_drift_confirmed", negative_drift_confirmed}, {"warnings", warnings}};
  }
};

// Streaming witness of the Hajek drift conditions for a functional Z.
class HajekDiagnostic {
 public:
  using Functional = std::function<double(const QueueVector&)>;

  HajekDiagnostic(Functional z, double kappa, std::optional<double> d_theory = std::nullopt,
                  std::int64_t batch_size = 64)
      : z_(std::move(z)), kappa_(kappa), d_theory_(d_theory), batch_size_(batch_size) {}

  void operator()(const SlotRecord& r) {
    const double zb = z_(r.q_before), za = z_(r.q_after);
    const double dz = za - zb;
    ++steps_;
    d_hat_ = std::max(d_hat_, std::abs(dz));
    if (d_theory_ && std::abs(dz) > *d_theory_ + 1e-9) ++c2_violations_;
    if (zb >= kappa_) {
      ++conditioned_;
      cur_sum_ += dz;
      if (++cur_n_ == batch_size_) {
        batch_means_.push_back(cur_sum_ / static_cast<double>(batch_size_));
        cur_sum_ = 0.0;
        cur_n_ = 0;
      }
    }
  }

  void merge(const HajekDiagnostic& o) {
    steps_ += o.steps_;
    conditioned_ += o.conditioned_;
    d_hat_ = std::max(d_hat_, o.d_hat_);
    c2_violations_ += o.c2_violations_;
    batch_means_.insert(batch_means_.end(), o.batch_means_.begin(), o.batch_means_.end());
    // pool partial batches so short paths still contribute
    cur_sum_ += o.cur_sum_;
    cur_n_ += o.cur_n_;
    if (cur_n_ >= batch_size_) {
      batch_means_.push_back(cur_sum_ / static_cast<double>(cur_n_));
      cur_sum_ = 0.0;
      cur_n_ = 0;
    }
  }

  HajekResult result() const {
    HajekResult h;
    h.D_hat = d_hat_;
    h.c2_violations = c2_violations_;
    h.conditioned = conditioned_;
    h.steps = steps_;
    if (conditioned_ < 100 || batch_means_.size() < 2) {
      h.insufficient_data = true;
      h.warnings.push_back("insufficient conditioned samples: " + std::to_string(conditioned_));
      double tot = 0.0;
      for (double m : batch_means_) tot += m;
      h.eta_hat = batch_means_.empty() ? 0.0 : -tot / static_cast<double>(batch_means_.size());
      h.ci_low = -std::numeric_limits<double>::infinity();
      h.ci_high = std::numeric_limits<double>::infinity();
      return h;
    }
    auto e = from_batch_means(batch_means_, conditioned_);
    h.eta_hat = -e.mean;
    h.ci_low = -e.ci_high;
    h.ci_high = -e.ci_low;
    h.negative_drift_confirmed = h.ci_low > 0.0;
    if (h.eta_hat <= 0.0) h.warnings.push_back("non-negative drift above kappa");
    return h;
  }

 private:
  Functional z_;
  double kappa_;
  std::optional<double> d_theory_;
  std::int64_t batch_size_;
  std::int64_t steps_ = 0, conditioned_ = 0, c2_violations_ = 0;
  double d_hat_ = 0.0;
  double cur_sum_ = 0.0;
  std::int64_t cur_n_ = 0;
  std::vector<double> batch_means_;
};

inline HajekDiagnostic::Functional perp_norm_functional(RateVector c) {
  check_unit_direction(c);
  return [c](const QueueVector& q) {
    double par, perp2;
    detail::par_perp(q, c, par, perp2);
    return std::sqrt(perp2);
  };
}

}  // namespace htq
