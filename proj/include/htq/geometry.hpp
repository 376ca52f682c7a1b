#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "htq/core.hpp"

namespace htq {

class ScheduleSet {
 public:
  ScheduleSet() = default;
  explicit ScheduleSet(std::vector<QueueVector> schedules) : schedules_(std::move(schedules)) {
    if (schedules_.empty()) throw Error(ErrorCode::config, "schedule set is empty");
    const std::size_t L = schedules_.front().size();
    if (L == 0) throw Error(ErrorCode::dimension, "schedules must have L >= 1");
    bool has_zero = false;
    for (const auto& s : schedules_) {
      if (s.size() != L) throw Error(ErrorCode::dimension, "schedules of unequal length");
      bool zero = true;
      for (auto v : s) {
        if (v < 0) throw Error(ErrorCode::config, "schedule rates must be nonnegative");
        if (v != 0) zero = false;
        s_max_ = std::max(s_max_, v);
      }
      has_zero = has_zero || zero;
    }
    if (!has_zero) throw Error(ErrorCode::config, "schedule set must contain the zero vector");
  }

  std::size_t dim() const { return schedules_.empty() ? 0 : schedules_.front().size(); }
  std::size_t size() const { return schedules_.size(); }
  const QueueVector& operator[](std::size_t i) const { return schedules_[i]; }
  const std::vector<QueueVector>& schedules() const { return schedules_; }
  std::int64_t s_max() const { return s_max_; }

  std::vector<RateVector> points() const {
    std::vector<RateVector> out;
    out.reserve(schedules_.size());
    for (const auto& s : schedules_) out.push_back(to_rate(s));
    return out;
  }

 private:
  std::vector<QueueVector> schedules_;
  std::int64_t s_max_ = 0;
};

struct Hyperplane {
  RateVector c;
  double b = 0.0;
};

struct CapacityRegion {
  std::size_t L = 0;
  std::vector<Hyperplane> hyperplanes;
  std::vector<RateVector> generators;  // vertices of the region

  std::size_t K() const { return hyperplanes.size(); }
  const Hyperplane& face(std::size_t k) const {
    if (k >= hyperplanes.size())
      throw Error(ErrorCode::index, "face index " + std::to_string(k + 1) + " out of range");
    return hyperplanes[k];
  }
};

struct HeavyTrafficPoint {
  RateVector lambda;
  std::vector<double> eps;
  std::vector<RateVector> projections;
  std::vector<std::size_t> dominant;
  std::vector<std::size_t> interior_dominant;

  bool is_dominant(std::size_t k) const {
    return std::find(dominant.begin(), dominant.end(), k) != dominant.end();
  }
  bool is_interior_dominant(std::size_t k) const {
    return std::find(interior_dominant.begin(), interior_dominant.end(), k) !=
           interior_dominant.end();
  }
};

struct FadingModel {
  std::vector<std::string> names;
  std::vector<double> probs;
  std::vector<ScheduleSet> sets;

  FadingModel() = default;
  FadingModel(std::vector<std::string> n, std::vector<double> p, std::vector<ScheduleSet> s)
      : names(std::move(n)), probs(std::move(p)), sets(std::move(s)) {
    if (sets.empty() || probs.size() != sets.size())
      throw Error(ErrorCode::config, "fading model needs one probability per state");
    if (names.empty())
      for (std::size_t j = 0; j < sets.size(); ++j) names.push_back("state" + std::to_string(j));
    if (names.size() != sets.size()) throw Error(ErrorCode::config, "fading state names mismatch");
    double total = 0.0;
    for (double p : probs) {
      if (!(p > 0.0)) throw Error(ErrorCode::config, "fading state probabilities must be positive");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw Error(ErrorCode::config, "fading probabilities sum to " + std::to_string(total));
    for (const auto& s : sets)
      if (s.dim() != sets.front().dim())
        throw Error(ErrorCode::dimension, "fading states of unequal dimension");
  }

  std::size_t dim() const { return sets.front().dim(); }
  std::size_t num_states() const { return sets.size(); }
  std::int64_t s_max() const {
    std::int64_t m = 0;
    for (const auto& s : sets) m = std::max(m, s.s_max());
    return m;
  }
  const ScheduleSet& state(std::size_t j) const {
    if (j >= sets.size()) throw Error(ErrorCode::invalid_state, "unknown channel state " + std::to_string(j));
    return sets[j];
  }
};

namespace detail {

constexpr double kGeomTol = 1e-9;

inline int rank_of(const std::vector<RateVector>& vecs, std::size_t L) {
  if (vecs.empty()) return 0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(vecs.size()), static_cast<Eigen::Index>(L));
  for (std::size_t i = 0; i < vecs.size(); ++i)
    for (std::size_t l = 0; l < L; ++l) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = vecs[i][l];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  lu.setThreshold(1e-10);
  return static_cast<int>(lu.rank());
}

inline std::vector<RateVector> dedup_points(const std::vector<RateVector>& pts) {
  std::vector<RateVector> out;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : out) {
      double d = 0.0;
      for (std::size_t l = 0; l < p.size(); ++l) d = std::max(d, std::abs(p[l] - q[l]));
      if (d <= 1e-12) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(p);
  }
  return out;
}

inline RateVector normalized(RateVector v) {
  const double n = norm(v);
  for (auto& x : v) x /= n;
  return v;
}

// Weighted point sets: the region is sum_j w_j conv(P_j).
struct WeightedSets {
  std::vector<double> w;
  std::vector<std::vector<RateVector>> pts;
};

inline double support(const WeightedSets& ws, const RateVector& n, std::vector<RateVector>* face_dirs) {
  double h = 0.0;
  for (std::size_t j = 0; j < ws.pts.size(); ++j) {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& p : ws.pts[j]) m = std::max(m, inner(n, p));
    h += ws.w[j] * m;
    if (face_dirs) {
      const RateVector* anchor = nullptr;
      for (const auto& p : ws.pts[j]) {
        if (inner(n, p) < m - kGeomTol) continue;
        if (!anchor) {
          anchor = &p;
          continue;
        }
        RateVector d(p.size());
        for (std::size_t l = 0; l < p.size(); ++l) d[l] = p[l] - (*anchor)[l];
        face_dirs->push_back(d);
      }
    }
  }
  return h;
}

// Facets of sum_j w_j conv(P_j) with normals pointing outward, all full facets
// including coordinate ones. Candidate normals are orthogonal to L-1 edge
// directions taken from within single summands.
inline std::vector<Hyperplane> minkowski_facets(const WeightedSets& ws, std::size_t L) {
  std::vector<RateVector> dirs;
  for (const auto& P : ws.pts)
    for (std::size_t i = 0; i < P.size(); ++i)
      for (std::size_t j = i + 1; j < P.size(); ++j) {
        RateVector d(L);
        for (std::size_t l = 0; l < L; ++l) d[l] = P[j][l] - P[i][l];
        if (norm(d) <= 1e-12) continue;
        d = normalized(d);
        // canonical sign: first nonzero component positive
        for (std::size_t l = 0; l < L; ++l) {
          if (std::abs(d[l]) > 1e-12) {
            if (d[l] < 0)
              for (auto& x : d) x = -x;
            break;
          }
        }
        bool dup = false;
        for (const auto& e : dirs) {
          double m = 0.0;
          for (std::size_t l = 0; l < L; ++l) m = std::max(m, std::abs(e[l] - d[l]));
          if (m <= 1e-12) {
            dup = true;
            break;
          }
        }
        if (!dup) dirs.push_back(d);
      }

  std::vector<RateVector> normals;
  auto add_normal = [&](RateVector n) {
    if (norm(n) <= 1e-12) return;
    n = normalized(n);
    for (int sgn : {1, -1}) {
      RateVector v = n;
      if (sgn < 0)
        for (auto& x : v) x = -x;
      bool dup = false;
      for (const auto& e : normals) {
        double m = 0.0;
        for (std::size_t l = 0; l < L; ++l) m = std::max(m, std::abs(e[l] - v[l]));
        if (m <= 1e-9) {
          dup = true;
          break;
        }
      }
      if (!dup) normals.push_back(v);
    }
  };
  if (L == 1) {
    add_normal({1.0});
  } else if (L == 2) {
    for (const auto& d : dirs) add_normal({-d[1], d[0]});
  } else {
    for (std::size_t i = 0; i < dirs.size(); ++i)
      for (std::size_t j = i + 1; j < dirs.size(); ++j) {
        const auto& a = dirs[i];
        const auto& b = dirs[j];
        add_normal({a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]});
      }
  }

  std::vector<Hyperplane> facets;
  for (const auto& n : normals) {
    std::vector<RateVector> face_dirs;
    const double h = support(ws, n, &face_dirs);
    if (rank_of(face_dirs, L) == static_cast<int>(L) - 1) facets.push_back({n, h});
  }
  return facets;
}

inline bool lex_less(const Hyperplane& a, const Hyperplane& b) {
  return std::lexicographical_compare(a.c.begin(), a.c.end(), b.c.begin(), b.c.end());
}

// Vertices of {r >= 0 : <c_k, r> <= b_k}.
inline std::vector<RateVector> polytope_vertices(const std::vector<Hyperplane>& hs, std::size_t L) {
  std::vector<Hyperplane> all = hs;
  for (std::size_t l = 0; l < L; ++l) {
    Hyperplane h;
    h.c.assign(L, 0.0);
    h.c[l] = -1.0;
    h.b = 0.0;
    all.push_back(h);
  }
  const std::size_t m = all.size();
  std::vector<RateVector> verts;
  std::vector<std::size_t> idx(L);
  // iterate over L-subsets
  std::vector<bool> pick(m, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(std::min(L, m)), true);
  if (m < L) return verts;
  do {
    std::size_t t = 0;
    for (std::size_t i = 0; i < m; ++i)
      if (pick[i]) idx[t++] = i;
    Eigen::MatrixXd A(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(L));
    for (std::size_t r = 0; r < L; ++r) {
      for (std::size_t l = 0; l < L; ++l) A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l)) = all[idx[r]].c[l];
      rhs(static_cast<Eigen::Index>(r)) = all[idx[r]].b;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) continue;
    Eigen::VectorXd x = lu.solve(rhs);
    RateVector v(L);
    bool ok = true;
    for (std::size_t l = 0; l < L; ++l) {
      v[l] = std::abs(x(static_cast<Eigen::Index>(l))) < 1e-13 ? 0.0 : x(static_cast<Eigen::Index>(l));
    }
    for (const auto& h : all)
      if (inner(h.c, v) > h.b + kGeomTol) {
        ok = false;
        break;
      }
    if (ok) verts.push_back(v);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  verts = dedup_points(verts);
  std::sort(verts.begin(), verts.end());
  return verts;
}

inline CapacityRegion region_from_sets(const WeightedSets& ws, std::size_t L) {
  if (L == 0) throw Error(ErrorCode::dimension, "dimension must be >= 1");
  if (L > 3) throw Error(ErrorCode::unsupported_dimension, "exact hulls support L <= 3, got " + std::to_string(L));
  std::vector<RateVector> all_dirs;
  for (const auto& P : ws.pts)
    for (const auto& p : P) {
      if (p.size() != L) throw Error(ErrorCode::dimension, "point dimension mismatch");
      all_dirs.push_back(p);  // zero is in every set, so points themselves span the hull
    }
  if (rank_of(all_dirs, L) < static_cast<int>(L))
    throw Error(ErrorCode::non_coordinate_convex, "hull is not full-dimensional");

  CapacityRegion region;
  region.L = L;
  for (auto h : minkowski_facets(ws, L)) {
    bool coord = std::abs(h.b) <= kGeomTol;
    int neg = 0;
    for (double x : h.c)
      if (x < -1e-12) ++neg;
    if (coord) {
      // must be -e_l
      int ones = 0;
      for (double x : h.c)
        if (std::abs(x + 1.0) <= 1e-9) ++ones;
      if (ones == 1) continue;
    }
    if (neg > 0 || h.b <= kGeomTol)
      throw Error(ErrorCode::non_coordinate_convex,
                  "hull has a facet that cannot be written with a nonnegative normal");
    for (auto& x : h.c)
      if (x < 0.0 || std::abs(x) < 1e-15) x = 0.0;
    const double n = norm(h.c);
    for (auto& x : h.c) x /= n;
    h.b /= n;
    region.hyperplanes.push_back(h);
  }
  std::sort(region.hyperplanes.begin(), region.hyperplanes.end(), lex_less);
  region.generators = polytope_vertices(region.hyperplanes, L);
  return region;
}

}  // namespace detail

inline CapacityRegion hull_halfspaces(const ScheduleSet& s) {
  if (s.dim() > 3)
    throw Error(ErrorCode::unsupported_dimension, "exact hulls support L <= 3, got " + std::to_string(s.dim()));
  if (s.size() > 64) throw Error(ErrorCode::too_large, "schedule set larger than 64");
  detail::WeightedSets ws;
  ws.w = {1.0};
  ws.pts = {detail::dedup_points(s.points())};
  return detail::region_from_sets(ws, s.dim());
}

inline bool member(const CapacityRegion& region, const RateVector& r) {
  if (r.size() != region.L) throw Error(ErrorCode::dimension, "member: dimension mismatch");
  for (double x : r)
    if (!(x >= 0.0)) return false;
  for (const auto& h : region.hyperplanes)
    if (inner(h.c, r) > h.b + 1e-9) return false;
  return true;
}

inline HeavyTrafficPoint heavy_traffic_point(const CapacityRegion& region, const RateVector& lambda) {
  constexpr double tol_interior = 1e-9;
  constexpr double tol_strict = 1e-9;
  if (lambda.size() != region.L) throw Error(ErrorCode::dimension, "lambda dimension mismatch");
  for (double x : lambda)
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorCode::not_interior, "lambda must be nonnegative");
  HeavyTrafficPoint htp;
  htp.lambda = lambda;
  const std::size_t K = region.K();
  for (std::size_t k = 0; k < K; ++k) {
    const auto& h = region.hyperplanes[k];
    const double e = h.b - inner(h.c, lambda);
    if (!(e > tol_interior))
      throw Error(ErrorCode::not_interior,
                  "lambda is not strictly inside hyperplane " + std::to_string(k + 1));
    htp.eps.push_back(e);
    RateVector p(lambda.size());
    for (std::size_t l = 0; l < p.size(); ++l) p[l] = lambda[l] + e * h.c[l];
    htp.projections.push_back(p);
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (!member(region, htp.projections[k])) continue;
    htp.dominant.push_back(k);
    bool strict = true;
    for (std::size_t j = 0; j < K; ++j) {
      if (j == k) continue;
      const auto& h = region.hyperplanes[j];
      if (!(inner(h.c, htp.projections[k]) < h.b - tol_strict)) {
        strict = false;
        break;
      }
    }
    if (strict) htp.interior_dominant.push_back(k);
  }
  return htp;
}

// Point on face k approached along its normal: lambda = anchor - eps * c.
inline RateVector approach_along_normal(const CapacityRegion& region, std::size_t k,
                                        const RateVector& anchor, double eps) {
  const auto& h = region.face(k);
  RateVector lam(anchor.size());
  for (std::size_t l = 0; l < lam.size(); ++l) lam[l] = anchor[l] - eps * h.c[l];
  return lam;
}

// Centroid of the face's vertices, a relative-interior anchor for the approach.
inline RateVector face_centroid(const CapacityRegion& region, std::size_t k) {
  const auto& h = region.face(k);
  RateVector acc(region.L, 0.0);
  int n = 0;
  for (const auto& v : region.generators)
    if (std::abs(inner(h.c, v) - h.b) <= 1e-9) {
      for (std::size_t l = 0; l < region.L; ++l) acc[l] += v[l];
      ++n;
    }
  if (n == 0) throw Error(ErrorCode::degenerate_face, "face has no vertices");
  for (auto& x : acc) x /= n;
  return acc;
}

inline std::vector<RateVector> face_vertices(const CapacityRegion& region, std::size_t k) {
  const auto& h = region.face(k);
  std::vector<RateVector> out;
  for (const auto& v : region.generators)
    if (std::abs(inner(h.c, v) - h.b) <= 1e-9) out.push_back(v);
  return out;
}

namespace detail {

inline double gamma_for(const RateVector& c, const std::vector<QueueVector>& sched, double face_value,
                        bool* found) {
  double g = std::numeric_limits<double>::infinity();
  *found = false;
  for (const auto& s : sched) {
    const double w = inner(c, s);
    if (w < face_value - 1e-9) {
      g = std::min(g, face_value - w);
      *found = true;
    }
  }
  return g;
}

inline double max_weight_value(const RateVector& c, const std::vector<QueueVector>& sched) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& s : sched) m = std::max(m, inner(c, s));
  return m;
}

// Probe directions in the nonnegative orthant (unit vectors).
inline std::vector<RateVector> orthant_grid(std::size_t L, int n_dirs) {
  std::vector<RateVector> out;
  const double half_pi = std::numbers::pi / 2.0;
  if (L == 2) {
    const int n = std::max(2, n_dirs);
    for (int i = 0; i < n; ++i) {
      const double a = half_pi * i / (n - 1);
      out.push_back({std::cos(a), std::sin(a)});
    }
  } else if (L == 3) {
    const int m = std::max(2, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_dirs)))));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double phi = half_pi * i / (m - 1), psi = half_pi * j / (m - 1);
        out.push_back({std::sin(phi) * std::cos(psi), std::sin(phi) * std::sin(psi), std::cos(phi)});
      }
  }
  return out;
}

// Angle from c to the nearest nonnegative direction at which some schedule
// strictly off the face (value < face_value) is a MaxWeight maximizer,
// capped by the widest angle between c and the orthant.
inline double cone_angle_for(const RateVector& c, const std::vector<QueueVector>& sched,
                             double face_value, int n_dirs) {
  const std::size_t L = c.size();
  const double half_pi = std::numbers::pi / 2.0;
  std::vector<RateVector> on, off;
  for (const auto& s : sched) (inner(c, s) >= face_value - 1e-9 ? on : off).push_back(to_rate(s));
  if (on.empty()) throw Error(ErrorCode::degenerate_face, "no schedule achieves the face value");
  if (L == 1) return half_pi;

  double cap = 0.0;
  for (double x : c) cap = std::max(cap, std::acos(std::clamp(x, -1.0, 1.0)));
  double theta = std::min(half_pi, cap);

  std::vector<RateVector> all = on;
  all.insert(all.end(), off.begin(), off.end());
  for (const auto& sp : off) {
    std::vector<RateVector> rows;
    for (const auto& s : all) {
      RateVector a(L);
      for (std::size_t l = 0; l < L; ++l) a[l] = sp[l] - s[l];
      if (norm(a) > 1e-12) rows.push_back(a);
    }
    for (std::size_t l = 0; l < L; ++l) {
      RateVector e(L, 0.0);
      e[l] = 1.0;
      rows.push_back(e);
    }
    std::vector<RateVector> cand{c};
    for (const auto& a : rows) {
      const double t = inner(a, c) / inner(a, a);
      RateVector p(L);
      for (std::size_t l = 0; l < L; ++l) p[l] = c[l] - t * a[l];
      cand.push_back(p);
    }
    if (L == 3)
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
          const auto& a = rows[i];
          const auto& b = rows[j];
          cand.push_back({a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]});
        }
    for (auto v : cand) {
      for (int sgn : {1, -1}) {
        RateVector w = v;
        if (sgn < 0)
          for (auto& x : w) x = -x;
        const double nw = norm(w);
        if (nw <= 1e-12) continue;
        bool feasible = true;
        for (const auto& a : rows)
          if (inner(a, w) < -1e-12 * nw * norm(a)) {
            feasible = false;
            break;
          }
        if (feasible) theta = std::min(theta, angle(w, c));
      }
    }
  }

  // independent grid probe; it can only lower the estimate
  for (const auto& q : orthant_grid(L, n_dirs)) {
    const double a = angle(q, c);
    if (a >= theta) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& s : all) best = std::max(best, inner(q, s));
    for (const auto& s : off)
      if (inner(q, s) >= best - 1e-12) {
        theta = std::min(theta, a);
        break;
      }
  }
  if (!(theta > 0.0)) throw Error(ErrorCode::degenerate_face, "cone angle is zero");
  return theta;
}

}  // namespace detail

inline double gamma_k(const CapacityRegion& region, const ScheduleSet& s, std::size_t k) {
  const auto& h = region.face(k);
  bool found = false;
  const double g = detail::gamma_for(h.c, s.schedules(), h.b, &found);
  if (!found) throw Error(ErrorCode::degenerate_face, "every schedule lies on face " + std::to_string(k + 1));
  return g;
}

inline double cone_angle_k(const CapacityRegion& region, const ScheduleSet& s, std::size_t k,
                           int n_dirs = 2048) {
  const auto& h = region.face(k);
  if (std::abs(detail::max_weight_value(h.c, s.schedules()) - h.b) > 1e-9)
    throw Error(ErrorCode::degenerate_face, "no schedule achieves b on face " + std::to_string(k + 1));
  return detail::cone_angle_for(h.c, s.schedules(), h.b, n_dirs);
}

inline CapacityRegion fading_region(const FadingModel& f) {
  const std::size_t L = f.dim();
  if (L > 3) throw Error(ErrorCode::unsupported_dimension, "exact hulls support L <= 3, got " + std::to_string(L));
  detail::WeightedSets ws;
  double combos = 1.0;
  for (std::size_t j = 0; j < f.num_states(); ++j) {
    auto pts = detail::dedup_points(f.sets[j].points());
    combos *= static_cast<double>(pts.size());
    ws.w.push_back(f.probs[j]);
    ws.pts.push_back(std::move(pts));
  }
  if (combos > 1e5) throw Error(ErrorCode::too_large, "fading vertex combinations exceed 1e5");
  // the sum is full-dimensional iff the weighted points span R^L
  detail::WeightedSets scaled = ws;
  for (std::size_t j = 0; j < scaled.pts.size(); ++j)
    for (auto& p : scaled.pts[j])
      for (auto& x : p) x *= scaled.w[j];
  std::vector<RateVector> all;
  for (const auto& P : scaled.pts) all.insert(all.end(), P.begin(), P.end());
  if (detail::rank_of(all, L) < static_cast<int>(L))
    throw Error(ErrorCode::non_coordinate_convex, "fading region is not full-dimensional");
  return detail::region_from_sets(ws, L);
}

// States enumerate ON/OFF patterns: bit l set means queue l is ON.
inline FadingModel onoff_downlink_model(const std::vector<double>& p) {
  const std::size_t L = p.size();
  if (L == 0 || L > 16) throw Error(ErrorCode::dimension, "downlink needs 1 <= L <= 16");
  for (double x : p)
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::domain, "ON probabilities must lie in [0,1]");
  std::vector<std::string> names;
  std::vector<double> probs;
  std::vector<ScheduleSet> sets;
  for (std::size_t mask = 0; mask < (std::size_t{1} << L); ++mask) {
    double pr = 1.0;
    std::string name;
    std::vector<QueueVector> sched{QueueVector(L, 0)};
    for (std::size_t l = 0; l < L; ++l) {
      const bool on = (mask >> l) & 1u;
      pr *= on ? p[l] : 1.0 - p[l];
      name += on ? '1' : '0';
      if (on) {
        QueueVector e(L, 0);
        e[l] = 1;
        sched.push_back(e);
      }
    }
    if (pr <= 0.0) continue;
    names.push_back(name);
    probs.push_back(pr);
    sets.emplace_back(sched);
  }
  double total = 0.0;
  for (double x : probs) total += x;
  for (auto& x : probs) x /= total;
  return FadingModel(names, probs, sets);
}

inline CapacityRegion onoff_downlink_region(const std::vector<double>& p) {
  const std::size_t L = p.size();
  if (L == 0) throw Error(ErrorCode::dimension, "downlink needs L >= 1");
  if (L > 6) throw Error(ErrorCode::unsupported_dimension, "downlink region supports L <= 6");
  for (double x : p) {
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::domain, "ON probabilities must lie in [0,1]");
    if (x == 0.0) throw Error(ErrorCode::domain, "an always-OFF queue makes the region degenerate");
  }
  std::vector<Hyperplane> cons;
  for (std::size_t mask = 1; mask < (std::size_t{1} << L); ++mask) {
    double off = 1.0;
    int n = 0;
    RateVector c(L, 0.0);
    for (std::size_t l = 0; l < L; ++l)
      if ((mask >> l) & 1u) {
        off *= 1.0 - p[l];
        c[l] = 1.0;
        ++n;
      }
    const double s = std::sqrt(static_cast<double>(n));
    for (auto& x : c) x /= s;
    cons.push_back({c, (1.0 - off) / s});
  }
  const auto verts = detail::polytope_vertices(cons, L);
  CapacityRegion region;
  region.L = L;
  for (const auto& h : cons) {
    std::vector<RateVector> on;
    for (const auto& v : verts)
      if (std::abs(inner(h.c, v) - h.b) <= 1e-9) on.push_back(v);
    std::vector<RateVector> diffs;
    for (std::size_t i = 1; i < on.size(); ++i) {
      RateVector d(L);
      for (std::size_t l = 0; l < L; ++l) d[l] = on[i][l] - on[0][l];
      diffs.push_back(d);
    }
    if (L == 1 ? !on.empty() : detail::rank_of(diffs, L) == static_cast<int>(L) - 1)
      region.hyperplanes.push_back(h);
  }
  std::sort(region.hyperplanes.begin(), region.hyperplanes.end(), detail::lex_less);
  region.generators = verts;
  return region;
}

// Best weighted service b^(j,k) per state.
inline std::vector<double> fading_face_values(const FadingModel& f, const RateVector& c) {
  std::vector<double> out;
  for (const auto& s : f.sets) out.push_back(detail::max_weight_value(c, s.schedules()));
  return out;
}

inline RealDist fading_face_service_dist(const FadingModel& f, const CapacityRegion& region, std::size_t k) {
  const auto& h = region.face(k);
  const auto vals = fading_face_values(f, h.c);
  RealDist d;
  for (std::size_t j = 0; j < vals.size(); ++j) {
    bool merged = false;
    for (auto& [v, p] : d.atoms)
      if (std::abs(v - vals[j]) <= 1e-12) {
        p += f.probs[j];
        merged = true;
        break;
      }
    if (!merged) d.atoms.push_back({vals[j], f.probs[j]});
  }
  std::sort(d.atoms.begin(), d.atoms.end());
  if (std::abs(d.mean() - h.b) > 1e-9)
    throw Error(ErrorCode::invariant_violation, "E[beta] differs from b on face " + std::to_string(k + 1));
  return d;
}

// Per-state loss: min over states of min{b^(j,k) - <c,s> > 0}.
inline double fading_gamma_k(const FadingModel& f, const CapacityRegion& region, std::size_t k) {
  const auto& h = region.face(k);
  const auto vals = fading_face_values(f, h.c);
  double g = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < f.num_states(); ++j) {
    bool found = false;
    const double gj = detail::gamma_for(h.c, f.sets[j].schedules(), vals[j], &found);
    if (found) {
      g = std::min(g, gj);
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::degenerate_face, "no off-face schedule in any state");
  return g;
}

inline double fading_cone_angle_k(const FadingModel& f, const CapacityRegion& region, std::size_t k,
                                  int n_dirs = 2048) {
  const auto& h = region.face(k);
  const auto vals = fading_face_values(f, h.c);
  double theta = std::numbers::pi / 2.0;
  for (std::size_t j = 0; j < f.num_states(); ++j)
    theta = std::min(theta, detail::cone_angle_for(h.c, f.sets[j].schedules(), vals[j], n_dirs));
  return theta;
}

inline nlohmann::json region_to_json(const CapacityRegion& r) {
  nlohmann::json j;
  j["L"] = r.L;
  j["hyperplanes"] = nlohmann::json::array();
  for (const auto& h : r.hyperplanes) j["hyperplanes"].push_back({{"c", h.c}, {"b", h.b}});
  j["generators"] = r.generators;
  return j;
}

inline CapacityRegion region_from_json(const nlohmann::json& j) {
  try {
    CapacityRegion r;
    r.hyperplanes.clear();
    for (const auto& hj : j.at("hyperplanes")) {
      Hyperplane h{hj.at("c").get<RateVector>(), hj.at("b").get<double>()};
      if (std::abs(norm(h.c) - 1.0) > 1e-9 || !(h.b > 0.0))
        throw Error(ErrorCode::config, "hyperplane must have a unit normal and b > 0");
      for (double x : h.c)
        if (x < 0.0) throw Error(ErrorCode::config, "hyperplane normal must be nonnegative");
      r.hyperplanes.push_back(h);
    }
    if (r.hyperplanes.empty()) throw Error(ErrorCode::config, "region has no hyperplanes");
    r.L = r.hyperplanes.front().c.size();
    for (const auto& h : r.hyperplanes)
      if (h.c.size() != r.L) throw Error(ErrorCode::config, "hyperplanes of unequal dimension");
    if (j.contains("generators")) r.generators = j.at("generators").get<std::vector<RateVector>>();
    else r.generators = detail::polytope_vertices(r.hyperplanes, r.L);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, std::string("region json: ") + e.what());
  }
}

}  // namespace htq
