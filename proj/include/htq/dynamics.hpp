#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "htq/core.hpp"
#include "htq/geometry.hpp"
#include "htq/policies.hpp"

namespace htq {

struct SlotRecord {
  std::int64_t t = 0;
  QueueVector q_before;
  QueueVector a;
  QueueVector s;
  QueueVector u;
  QueueVector q_after;
  int j = -1;  // channel state, -1 when not fading

  explicit SlotRecord(std::size_t L = 0) : q_before(L, 0), a(L, 0), s(L, 0), u(L, 0), q_after(L, 0) {}
};

// In place: reads q_before, a, s; writes u and q_after.
inline void step_into(SlotRecord& r) {
  const std::size_t L = r.q_before.size();
  for (std::size_t l = 0; l < L; ++l) {
    const std::int64_t net = checked_add(r.q_before[l], r.a[l]) - r.s[l];
    if (net >= 0) {
      r.q_after[l] = net;
      r.u[l] = 0;
    } else {
      r.q_after[l] = 0;
      r.u[l] = -net;
    }
  }
}

inline SlotRecord step(const QueueVector& q, const QueueVector& a, const QueueVector& s) {
  if (a.size() != q.size() || s.size() != q.size()) throw Error(ErrorCode::dimension, "step: dimension mismatch");
  for (std::size_t l = 0; l < q.size(); ++l)
    if (q[l] < 0 || a[l] < 0 || s[l] < 0) throw Error(ErrorCode::domain, "step: negative input");
  SlotRecord r(q.size());
  r.q_before = q;
  r.a = a;
  r.s = s;
  step_into(r);
  return r;
}

struct SingleServerState {
  std::int64_t phi = 0;
  BoundedIntDist alpha_dist;
  BoundedIntDist beta_dist;
};

// phi' = (phi + alpha - beta)^+, chi the unused service.
inline std::pair<std::int64_t, std::int64_t> single_server_update(std::int64_t phi, std::int64_t alpha,
                                                                  std::int64_t beta) {
  const std::int64_t net = checked_add(phi, alpha) - beta;
  return net >= 0 ? std::pair<std::int64_t, std::int64_t>{net, 0} : std::pair<std::int64_t, std::int64_t>{0, -net};
}

inline std::pair<std::int64_t, std::int64_t> single_server_step(SingleServerState& st, RandomStream& rng) {
  const auto alpha = st.alpha_dist.sample(rng);
  const auto beta = st.beta_dist.sample(rng);
  auto res = single_server_update(st.phi, alpha, beta);
  st.phi = res.first;
  return res;
}

enum class SystemKind { routing, scheduling, scheduling_fading };

inline const char* kind_name(SystemKind k) {
  switch (k) {
    case SystemKind::routing: return "routing";
    case SystemKind::scheduling: return "scheduling";
    case SystemKind::scheduling_fading: return "scheduling_fading";
  }
  return "?";
}

struct System {
  SystemKind kind = SystemKind::routing;
  std::size_t L = 0;
  BoundedIntDist arrival_total;           // routing: A_sum
  std::vector<BoundedIntDist> services;   // routing: S_l
  std::vector<BoundedIntDist> arrivals;   // scheduling: A_l
  ScheduleSet schedules;                  // scheduling
  FadingModel fading;                     // scheduling_fading
  BoundedIntDist channel;                 // state index distribution

  static System routing(BoundedIntDist total, std::vector<BoundedIntDist> services) {
    if (services.empty()) throw Error(ErrorCode::config, "routing needs at least one server");
    System s;
    s.kind = SystemKind::routing;
    s.L = services.size();
    s.arrival_total = std::move(total);
    s.services = std::move(services);
    return s;
  }

  static System scheduling(std::vector<BoundedIntDist> arrivals, ScheduleSet S) {
    if (arrivals.size() != S.dim()) throw Error(ErrorCode::dimension, "one arrival law per queue required");
    System s;
    s.kind = SystemKind::scheduling;
    s.L = S.dim();
    s.arrivals = std::move(arrivals);
    s.schedules = std::move(S);
    return s;
  }

  static System scheduling_fading(std::vector<BoundedIntDist> arrivals, FadingModel f) {
    if (arrivals.size() != f.dim()) throw Error(ErrorCode::dimension, "one arrival law per queue required");
    System s;
    s.kind = SystemKind::scheduling_fading;
    s.L = f.dim();
    s.arrivals = std::move(arrivals);
    s.fading = std::move(f);
    std::map<std::int64_t, double> pmf;
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < s.fading.probs.size(); ++j) {
      pmf[static_cast<std::int64_t>(j)] = s.fading.probs[j];
      acc += s.fading.probs[j];
    }
    pmf[static_cast<std::int64_t>(s.fading.probs.size() - 1)] = 1.0 - acc;
    s.channel = BoundedIntDist(pmf);
    return s;
  }

  std::int64_t a_max() const {
    if (kind == SystemKind::routing) return arrival_total.max_value();
    std::int64_t m = 0;
    for (const auto& d : arrivals) m = std::max(m, d.max_value());
    return m;
  }

  std::int64_t s_max() const {
    if (kind == SystemKind::routing) {
      std::int64_t m = 0;
      for (const auto& d : services) m = std::max(m, d.max_value());
      return m;
    }
    return kind == SystemKind::scheduling ? schedules.s_max() : fading.s_max();
  }

  double mean_arrival_total() const {
    if (kind == SystemKind::routing) return arrival_total.mean();
    double m = 0.0;
    for (const auto& d : arrivals) m += d.mean();
    return m;
  }

  RateVector arrival_rates() const {
    RateVector r;
    for (const auto& d : arrivals) r.push_back(d.mean());
    return r;
  }

  RateVector arrival_variances() const {
    RateVector r;
    for (const auto& d : arrivals) r.push_back(d.variance());
    return r;
  }
};

// Independent streams for one replication.
struct ReplicationStreams {
  RandomStream arrivals, service, channel, policy;
  ReplicationStreams(std::uint64_t seed, std::uint64_t rep)
      : arrivals(seed, rep * 8 + 0), service(seed, rep * 8 + 1), channel(seed, rep * 8 + 2), policy(seed, rep * 8 + 3) {}
};

inline void check_policy_fits(const System& sys, Policy p) {
  const bool routing = is_routing_policy(p);
  if (routing != (sys.kind == SystemKind::routing))
    throw Error(ErrorCode::config, std::string("policy ") + policy_name(p) + " does not fit a " + kind_name(sys.kind) + " system");
  if (p == Policy::maxweight_fading && sys.kind != SystemKind::scheduling_fading)
    throw Error(ErrorCode::config, "maxweight_fading needs a fading system");
}

// Runs T slots from q0 and feeds every record to sink; returns the final state.
template <class Sink>
QueueVector run_path(const System& sys, Policy policy, std::int64_t T, std::uint64_t seed, std::uint64_t rep,
                     Sink&& sink, QueueVector q0 = {}) {
  check_policy_fits(sys, policy);
  const std::size_t L = sys.L;
  if (q0.empty()) q0.assign(L, 0);
  if (q0.size() != L) throw Error(ErrorCode::dimension, "initial state dimension mismatch");
  for (auto v : q0)
    if (v < 0) throw Error(ErrorCode::domain, "initial queue lengths must be nonnegative");
  ReplicationStreams rs(seed, rep);
  Controller ctl(policy);
  SlotRecord rec(L);
  rec.q_before = std::move(q0);
  for (std::int64_t t = 0; t < T; ++t) {
    rec.t = t;
    if (sys.kind == SystemKind::routing) {
      const std::int64_t total = sys.arrival_total.sample(rs.arrivals);
      for (std::size_t l = 0; l < L; ++l) rec.s[l] = sys.services[l].sample(rs.service);
      ctl.route(rec.q_before, total, rs.policy, rec.a);
    } else {
      for (std::size_t l = 0; l < L; ++l) rec.a[l] = sys.arrivals[l].sample(rs.arrivals);
      const ScheduleSet* S = &sys.schedules;
      if (sys.kind == SystemKind::scheduling_fading) {
        rec.j = static_cast<int>(sys.channel.sample(rs.channel));
        S = &sys.fading.sets[static_cast<std::size_t>(rec.j)];
      }
      const QueueVector& chosen = ctl.schedule(rec.q_before, *S, rs.policy);
      std::copy(chosen.begin(), chosen.end(), rec.s.begin());
    }
    step_into(rec);
    sink(static_cast<const SlotRecord&>(rec));
    std::swap(rec.q_before, rec.q_after);
  }
  return rec.q_before;
}

struct ChainSolution {
  std::vector<double> pmf;
  double mean = 0.0;
  double second_moment = 0.0;
  double balance_residual = 0.0;  // ||pi P - pi||_1
  double tail_flow = 0.0;         // stationary mass pushed above N per slot
};

// Stationary law of phi' = (phi + alpha - beta)^+ truncated to {0..N}.
inline ChainSolution truncated_chain_solve(const BoundedIntDist& alpha, const BoundedIntDist& beta, int N) {
  if (N < 1) throw Error(ErrorCode::domain, "truncation N must be >= 1");
  if (!(alpha.mean() < beta.mean()) && alpha.max_value() > 0)
    throw Error(ErrorCode::instability, "mean arrival must be below mean service");
  const int n = N + 1;
  // increment distribution alpha - beta
  const auto amax = alpha.max_value(), bmax = beta.max_value();
  std::vector<double> inc(static_cast<std::size_t>(amax + bmax + 1), 0.0);  // index d + bmax
  for (std::int64_t a = 0; a <= amax; ++a)
    for (std::int64_t b = 0; b <= bmax; ++b) inc[static_cast<std::size_t>(a - b + bmax)] += alpha.prob(a) * beta.prob(b);

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> overflow(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (std::size_t d = 0; d < inc.size(); ++d) {
      if (inc[d] == 0.0) continue;
      const std::int64_t nxt = std::max<std::int64_t>(0, i + static_cast<std::int64_t>(d) - bmax);
      if (nxt > N) {
        overflow[static_cast<std::size_t>(i)] += inc[d];
        P(i, N) += inc[d];
      } else {
        P(i, static_cast<Eigen::Index>(nxt)) += inc[d];
      }
    }

  Eigen::MatrixXd A = (P - Eigen::MatrixXd::Identity(n, n)).transpose();
  A.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::VectorXd pi = A.partialPivLu().solve(rhs);
  for (int i = 0; i < n; ++i) pi(i) = std::max(0.0, pi(i));
  pi /= pi.sum();
  for (int it = 0; it < 50; ++it) {
    Eigen::RowVectorXd next = pi.transpose() * P;
    const double res = (next.transpose() - pi).lpNorm<1>();
    pi = next.transpose() / next.sum();
    if (res < 1e-15) break;
  }

  ChainSolution sol;
  sol.pmf.assign(pi.data(), pi.data() + n);
  for (int i = 0; i < n; ++i) {
    sol.mean += i * pi(i);
    sol.second_moment += static_cast<double>(i) * i * pi(i);
    sol.tail_flow += pi(i) * overflow[static_cast<std::size_t>(i)];
  }
  Eigen::RowVectorXd piP = pi.transpose() * P;
  sol.balance_residual = (piP.transpose() - pi).lpNorm<1>();
  if (sol.tail_flow > 1e-10)
    throw Error(ErrorCode::truncation, "truncation too small: tail flow " + std::to_string(sol.tail_flow));
  if (sol.balance_residual > 1e-10)
    throw Error(ErrorCode::truncation, "balance residual " + std::to_string(sol.balance_residual));
  return sol;
}

// Streams records as CSV rows: t,q_1..q_L,a_1..a_L,s_1..s_L,u_1..u_L,j
class TrajectoryCsv {
 public:
  TrajectoryCsv(std::ostream& os, std::size_t L) : os_(os) {
    os_ << "t";
    for (const char* p : {"q", "a", "s", "u"})
      for (std::size_t l = 1; l <= L; ++l) os_ << ',' << p << '_' << l;
    os_ << ",j\n";
  }
  void operator()(const SlotRecord& r) {
    os_ << r.t;
    for (const QueueVector* v : {&r.q_before, &r.a, &r.s, &r.u})
      for (auto x : *v) os_ << ',' << x;
    os_ << ',';
    if (r.j >= 0) os_ << r.j;
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

}  // namespace htq
