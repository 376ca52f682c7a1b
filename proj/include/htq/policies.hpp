#pragma once

#include <string>
#include <vector>

#include "htq/core.hpp"
#include "htq/geometry.hpp"

namespace htq {

enum class Policy { jsq, random, round_robin, maxweight, maxweight_fading, priority };

inline Policy parse_policy(const std::string& name) {
  if (name == "jsq") return Policy::jsq;
  if (name == "random") return Policy::random;
  if (name == "round_robin") return Policy::round_robin;
  if (name == "maxweight") return Policy::maxweight;
  if (name == "maxweight_fading") return Policy::maxweight_fading;
  if (name == "priority") return Policy::priority;
  throw Error(ErrorCode::config, "unknown policy '" + name + "'");
}

inline const char* policy_name(Policy p) {
  switch (p) {
    case Policy::jsq: return "jsq";
    case Policy::random: return "random";
    case Policy::round_robin: return "round_robin";
    case Policy::maxweight: return "maxweight";
    case Policy::maxweight_fading: return "maxweight_fading";
    case Policy::priority: return "priority";
  }
  return "?";
}

inline bool is_routing_policy(Policy p) {
  return p == Policy::jsq || p == Policy::random || p == Policy::round_robin;
}

namespace detail {

// Index chosen uniformly among the minimizers of q.
inline std::size_t argmin_uniform(const QueueVector& q, RandomStream& rng, std::vector<std::size_t>& ties) {
  ties.clear();
  std::int64_t best = q[0];
  for (std::size_t l = 0; l < q.size(); ++l) {
    if (q[l] < best) {
      best = q[l];
      ties.clear();
    }
    if (q[l] == best) ties.push_back(l);
  }
  return ties.size() == 1 ? ties[0] : ties[rng.index(ties.size())];
}

inline std::int64_t weight(const QueueVector& q, const QueueVector& s) {
  std::int64_t w = 0;
  for (std::size_t l = 0; l < q.size(); ++l) w += q[l] * s[l];
  return w;
}

inline std::size_t argmax_weight_uniform(const QueueVector& q, const std::vector<QueueVector>& S,
                                         RandomStream& rng, std::vector<std::size_t>& ties) {
  ties.clear();
  std::int64_t best = std::numeric_limits<std::int64_t>::min();
  for (std::size_t i = 0; i < S.size(); ++i) {
    const std::int64_t w = weight(q, S[i]);
    if (w > best) {
      best = w;
      ties.clear();
    }
    if (w == best) ties.push_back(i);
  }
  return ties.size() == 1 ? ties[0] : ties[rng.index(ties.size())];
}

}  // namespace detail

// All a_total packets go to one shortest queue, ties uniform.
inline QueueVector jsq_route(const QueueVector& q, std::int64_t a_total, RandomStream& rng) {
  std::vector<std::size_t> ties;
  QueueVector a(q.size(), 0);
  a[detail::argmin_uniform(q, rng, ties)] = a_total;
  return a;
}

inline QueueVector maxweight(const QueueVector& q, const ScheduleSet& s, RandomStream& rng) {
  if (s.size() == 0) throw Error(ErrorCode::config, "empty schedule set");
  if (q.size() != s.dim()) throw Error(ErrorCode::dimension, "maxweight: dimension mismatch");
  std::vector<std::size_t> ties;
  return s[detail::argmax_weight_uniform(q, s.schedules(), rng, ties)];
}

inline QueueVector maxweight_fading(const QueueVector& q, std::size_t j, const FadingModel& f, RandomStream& rng) {
  return maxweight(q, f.state(j), rng);
}

// Fixed priority: the lexicographically largest feasible schedule.
inline QueueVector priority_schedule(const ScheduleSet& s) {
  return *std::max_element(s.schedules().begin(), s.schedules().end());
}

// Stateful decision maker with scratch buffers; one per replication.
class Controller {
 public:
  explicit Controller(Policy p) : policy_(p) {}

  Policy policy() const { return policy_; }

  void route(const QueueVector& q, std::int64_t a_total, RandomStream& rng, QueueVector& a) {
    std::fill(a.begin(), a.end(), 0);
    std::size_t target = 0;
    switch (policy_) {
      case Policy::jsq: target = detail::argmin_uniform(q, rng, ties_); break;
      case Policy::random: target = rng.index(q.size()); break;
      case Policy::round_robin: target = rr_next_++ % q.size(); break;
      default: throw Error(ErrorCode::config, std::string("policy ") + policy_name(policy_) + " cannot route");
    }
    a[target] = a_total;
  }

  const QueueVector& schedule(const QueueVector& q, const ScheduleSet& s, RandomStream& rng) {
    switch (policy_) {
      case Policy::maxweight:
      case Policy::maxweight_fading:
        return s[detail::argmax_weight_uniform(q, s.schedules(), rng, ties_)];
      case Policy::priority:
        return *std::max_element(s.schedules().begin(), s.schedules().end());
      default: throw Error(ErrorCode::config, std::string("policy ") + policy_name(policy_) + " cannot schedule");
    }
  }

 private:
  Policy policy_;
  std::vector<std::size_t> ties_;
  std::size_t rr_next_ = 0;
};

}  // namespace htq
