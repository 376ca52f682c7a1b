#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "htq/bounds.hpp"
#include "htq/collapse.hpp"
#include "htq/core.hpp"
#include "htq/dynamics.hpp"
#include "htq/geometry.hpp"
#include "htq/montecarlo.hpp"
#include "htq/policies.hpp"

namespace htq::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { ok = 0, config_error = 2, domain_error = 3, invariant_error = 4, verification_error = 5 };

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::domain:
    case ErrorCode::not_interior:
    case ErrorCode::undefined_angle:
    case ErrorCode::instability:
    case ErrorCode::truncation:
    case ErrorCode::overflow: return domain_error;
    case ErrorCode::invariant_violation: return invariant_error;
    default: return config_error;
  }
}

using json = nlohmann::json;

// ---- configuration ----

struct SystemSpec {
  std::string type;  // routing | scheduling | scheduling_fading | single_server
  std::optional<BoundedIntDist> arrival;  // routing / single_server total arrivals
  std::vector<BoundedIntDist> services;   // routing servers (single_server: one)
  std::vector<BoundedIntDist> arrivals;   // scheduling, per queue
  std::optional<ScheduleSet> schedules;
  std::optional<FadingModel> fading;
  std::vector<double> onoff;  // set when the fading model came from ON/OFF probabilities
};

struct HeavyTrafficSpec {
  std::vector<double> eps;
  std::optional<std::size_t> face;  // 0-based
  std::optional<RateVector> anchor;
  ArrivalFamily family;
  double horizon_scale = 0.0;
};

struct ChecksSpec {
  std::optional<std::int64_t> a_max_override;
  std::optional<std::int64_t> s_max_override;
  double kappa = 2.0;
  int oracle_points = 1000;
  double hajek_min_eta = 0.0;
};

struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 0;
  SystemSpec system;
  Policy policy = Policy::jsq;
  std::optional<HeavyTrafficSpec> ht;
  SimConfig sim;
  std::vector<std::string> metric_names;
  ChecksSpec checks;
  std::vector<int> moments{1};
  std::optional<double> n2_hat;
  std::optional<double> verdict_tolerance;
  std::optional<CapacityRegion> expected_region;
  std::string out_dir = "out";
  json raw;
};

namespace detail {

[[noreturn]] inline void bad(const std::string& what) { throw Error(ErrorCode::config, what); }

inline const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) bad(where + ": missing key '" + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    bad(where + ": wrong type");
  }
}

inline BoundedIntDist parse_dist(const json& j, const std::string& where) {
  if (!j.is_object()) bad(where + ": distribution must be an object");
  const auto kind = get_as<std::string>(need(j, "kind", where), where + ".kind");
  if (kind == "bernoulli") return BoundedIntDist::bernoulli(get_as<double>(need(j, "p", where), where + ".p"));
  if (kind == "binomial")
    return BoundedIntDist::binomial(get_as<int>(need(j, "n", where), where + ".n"),
                                    get_as<double>(need(j, "p", where), where + ".p"));
  if (kind == "point") return BoundedIntDist::point(get_as<std::int64_t>(need(j, "value", where), where + ".value"));
  if (kind == "uniform")
    return BoundedIntDist::uniform(get_as<std::int64_t>(need(j, "lo", where), where),
                                   get_as<std::int64_t>(need(j, "hi", where), where));
  if (kind == "pmf") {
    std::map<std::int64_t, double> pmf;
    const auto& p = need(j, "pmf", where);
    if (p.is_object()) {
      for (auto it = p.begin(); it != p.end(); ++it) {
        std::size_t used = 0;
        std::int64_t v = 0;
        try {
          v = std::stoll(it.key(), &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != it.key().size()) bad(where + ": pmf keys must be integers");
        pmf[v] += get_as<double>(it.value(), where + ".pmf");
      }
    } else if (p.is_array()) {
      for (std::size_t v = 0; v < p.size(); ++v) pmf[static_cast<std::int64_t>(v)] = get_as<double>(p[v], where);
    } else {
      bad(where + ": pmf must be an object or array");
    }
    return BoundedIntDist(pmf);
  }
  bad(where + ": unknown distribution kind '" + kind + "'");
}

inline std::vector<BoundedIntDist> parse_dists(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) bad(where + ": expected a nonempty array");
  std::vector<BoundedIntDist> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_dist(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline ScheduleSet parse_schedules(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) bad(where + ": expected a nonempty array of schedules");
  std::vector<QueueVector> s;
  for (const auto& x : j) s.push_back(get_as<QueueVector>(x, where));
  return ScheduleSet(s);
}

inline SystemSpec parse_system(const json& j, bool arrivals_optional) {
  SystemSpec s;
  s.type = get_as<std::string>(need(j, "type", "system"), "system.type");
  if (s.type == "routing" || s.type == "single_server") {
    if (j.contains("arrival")) s.arrival = parse_dist(j["arrival"], "system.arrival");
    else if (!arrivals_optional) bad("system: missing key 'arrival'");
    if (s.type == "routing") {
      s.services = parse_dists(need(j, "services", "system"), "system.services");
    } else {
      s.services = {parse_dist(need(j, "service", "system"), "system.service")};
    }
  } else if (s.type == "scheduling" || s.type == "scheduling_fading") {
    if (j.contains("arrivals")) s.arrivals = parse_dists(j["arrivals"], "system.arrivals");
    else if (!arrivals_optional) bad("system: missing key 'arrivals'");
    if (s.type == "scheduling") {
      s.schedules = parse_schedules(need(j, "schedules", "system"), "system.schedules");
    } else {
      const auto& f = need(j, "fading", "system");
      if (f.contains("onoff")) {
        s.onoff = get_as<std::vector<double>>(f["onoff"], "system.fading.onoff");
        s.fading = onoff_downlink_model(s.onoff);
      } else {
        const auto& st = need(f, "states", "system.fading");
        if (!st.is_array() || st.empty()) bad("system.fading.states: expected a nonempty array");
        std::vector<std::string> names;
        std::vector<double> probs;
        std::vector<ScheduleSet> sets;
        for (const auto& x : st) {
          names.push_back(x.value("name", "state" + std::to_string(names.size())));
          probs.push_back(get_as<double>(need(x, "prob", "system.fading.states[]"), "prob"));
          sets.push_back(parse_schedules(need(x, "schedules", "system.fading.states[]"), "schedules"));
        }
        s.fading = FadingModel(names, probs, sets);
      }
    }
  } else {
    bad("system.type must be routing, scheduling, scheduling_fading or single_server");
  }
  return s;
}

inline CapacityRegion parse_region(const json& j) {
  try {
    return region_from_json(j);
  } catch (const json::exception& e) {
    bad(std::string("expected_region: ") + e.what());
  }
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using detail::bad;
  using detail::get_as;
  using detail::need;
  if (!j.is_object()) bad("config must be a JSON object");
  ExperimentConfig c;
  c.raw = j;
  c.name = j.value("name", std::string("experiment"));
  if (!j.contains("seed")) bad("config: 'seed' is mandatory");
  c.seed = get_as<std::uint64_t>(j["seed"], "seed");
  const bool has_ht = j.contains("heavy_traffic");
  c.system = detail::parse_system(need(j, "system", "config"), has_ht);
  c.policy = parse_policy(get_as<std::string>(need(j, "policy", "config"), "policy"));
  const bool routing = c.system.type == "routing" || c.system.type == "single_server";
  if (routing != is_routing_policy(c.policy)) bad("policy does not fit the system type");

  if (has_ht) {
    const auto& h = j["heavy_traffic"];
    HeavyTrafficSpec ht;
    ht.eps = get_as<std::vector<double>>(need(h, "eps", "heavy_traffic"), "heavy_traffic.eps");
    check_eps_list(ht.eps);
    if (h.contains("face")) {
      const int f = get_as<int>(h["face"], "heavy_traffic.face");
      if (f < 1) bad("heavy_traffic.face is 1-based");
      ht.face = static_cast<std::size_t>(f - 1);
    }
    if (h.contains("anchor")) ht.anchor = get_as<RateVector>(h["anchor"], "heavy_traffic.anchor");
    if (h.contains("arrival_family")) {
      const auto& fam = h["arrival_family"];
      ht.family.kind = get_as<std::string>(need(fam, "kind", "arrival_family"), "arrival_family.kind");
      ht.family.n = fam.value("n", 1);
      if (ht.family.kind != "bernoulli" && ht.family.kind != "binomial")
        bad("arrival_family.kind must be bernoulli or binomial");
      if (ht.family.n < 1) bad("arrival_family.n must be >= 1");
    }
    ht.horizon_scale = h.value("horizon_scale", 0.0);
    if (!routing && !ht.face) bad("heavy_traffic.face is required for scheduling systems");
    c.ht = ht;
  }

  const json s = j.value("sim", json::object());
  c.sim.horizon = s.value("horizon", std::int64_t{100000});
  c.sim.burn_in = s.value("burn_in", std::int64_t{-1});
  c.sim.batches = s.value("batches", 32);
  c.sim.replications = s.value("replications", 1);
  c.sim.jobs = s.value("jobs", 0);
  c.sim.base_seed = c.seed;
  if (s.contains("metrics")) c.metric_names = get_as<std::vector<std::string>>(s["metrics"], "sim.metrics");
  if (s.contains("initial")) c.sim.initial = get_as<QueueVector>(s["initial"], "sim.initial");
  if (c.sim.horizon <= 0) bad("sim.horizon must be positive");

  if (j.contains("checks")) {
    const auto& k = j["checks"];
    if (k.contains("a_max_override")) c.checks.a_max_override = get_as<std::int64_t>(k["a_max_override"], "a_max");
    if (k.contains("s_max_override")) c.checks.s_max_override = get_as<std::int64_t>(k["s_max_override"], "s_max");
    c.checks.kappa = k.value("kappa", c.checks.kappa);
    c.checks.oracle_points = k.value("oracle_points", c.checks.oracle_points);
  }
  if (j.contains("bounds")) {
    const auto& b = j["bounds"];
    if (b.contains("moments")) c.moments = get_as<std::vector<int>>(b["moments"], "bounds.moments");
    if (b.contains("n2_hat")) c.n2_hat = get_as<double>(b["n2_hat"], "bounds.n2_hat");
  }
  if (j.contains("verdict_tolerance")) c.verdict_tolerance = get_as<double>(j["verdict_tolerance"], "tolerance");
  if (j.contains("expected_region")) {
    const auto& r = j["expected_region"];
    if (r.is_string()) {
      std::ifstream in(r.get<std::string>());
      if (!in) bad("cannot open expected_region file " + r.get<std::string>());
      json rj;
      try {
        rj = json::parse(in);
      } catch (const json::exception& e) {
        bad(std::string("expected_region: ") + e.what());
      }
      c.expected_region = detail::parse_region(rj);
    } else {
      c.expected_region = detail::parse_region(r);
    }
  }
  if (j.contains("output")) c.out_dir = j["output"].value("dir", c.out_dir);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return detail::fnv1a(c.raw.dump()); }

// ---- model construction ----

inline bool is_routing(const ExperimentConfig& c) {
  return c.system.type == "routing" || c.system.type == "single_server";
}

inline std::size_t dimension(const ExperimentConfig& c) {
  if (is_routing(c)) return c.system.services.size();
  return c.system.schedules ? c.system.schedules->dim() : c.system.fading->dim();
}

inline CapacityRegion build_region(const ExperimentConfig& c) {
  if (is_routing(c)) {
    // sum of rates below the total service rate
    CapacityRegion r;
    r.L = c.system.services.size();
    double mu = 0.0;
    for (const auto& s : c.system.services) mu += s.mean();
    const auto u = uniform_direction(r.L);
    r.hyperplanes.push_back({u, mu / std::sqrt(static_cast<double>(r.L))});
    r.generators.push_back(RateVector(r.L, 0.0));
    for (std::size_t l = 0; l < r.L; ++l) {
      RateVector v(r.L, 0.0);
      v[l] = mu;
      r.generators.push_back(v);
    }
    return r;
  }
  if (c.system.type == "scheduling") return hull_halfspaces(*c.system.schedules);
  return fading_region(*c.system.fading);
}

inline SchedulingTemplate scheduling_template(const ExperimentConfig& c) {
  SchedulingTemplate t;
  t.fading = c.system.type == "scheduling_fading";
  if (t.fading) t.model = *c.system.fading;
  else t.schedules = *c.system.schedules;
  if (c.ht) t.family = c.ht->family;
  return t;
}

// One operating point of the experiment: the configured arrivals or one heavy-traffic eps.
struct OperatingPoint {
  double eps = std::numeric_limits<double>::quiet_NaN();  // gap on the tracked face
  System sys;
  RateVector lambda;
  std::optional<HeavyTrafficPoint> htp;
  std::size_t face = 0;
  RateVector c;  // tracked direction
};

inline RateVector anchor_for(const ExperimentConfig& c, const CapacityRegion& R, std::size_t k) {
  if (c.ht && c.ht->anchor) return *c.ht->anchor;
  return face_centroid(R, k);
}

inline std::vector<OperatingPoint> operating_points(const ExperimentConfig& c) {
  std::vector<OperatingPoint> out;
  const auto R = build_region(c);
  if (is_routing(c)) {
    double mu = 0.0;
    for (const auto& s : c.system.services) mu += s.mean();
    auto make = [&](const BoundedIntDist& a) {
      OperatingPoint p;
      p.sys = System::routing(a, c.system.services);
      p.eps = mu - a.mean();
      if (!(p.eps > 1e-12)) throw Error(ErrorCode::not_interior, "mean arrival rate must be below total service rate");
      p.lambda = {a.mean()};
      p.c = uniform_direction(c.system.services.size());
      return p;
    };
    if (c.ht) {
      for (double e : c.ht->eps) out.push_back(make(c.ht->family.with_mean(mu - e)));
    } else {
      out.push_back(make(*c.system.arrival));
    }
    return out;
  }
  const auto tpl = scheduling_template(c);
  if (c.ht) {
    const std::size_t k = *c.ht->face;
    const auto& h = R.face(k);
    const auto anchor = anchor_for(c, R, k);
    if (anchor.size() != R.L) throw Error(ErrorCode::config, "anchor has the wrong dimension");
    if (std::abs(inner(h.c, anchor) - h.b) > 1e-9) throw Error(ErrorCode::domain, "anchor is not on the face");
    for (double e : c.ht->eps) {
      OperatingPoint p;
      p.lambda = approach_along_normal(R, k, anchor, e);
      p.htp = heavy_traffic_point(R, p.lambda);
      p.sys = tpl.system(p.lambda);
      p.face = k;
      p.eps = p.htp->eps[k];
      p.c = h.c;
      out.push_back(std::move(p));
    }
    return out;
  }
  OperatingPoint p;
  if (c.system.arrivals.size() != R.L) throw Error(ErrorCode::config, "one arrival law per queue required");
  for (const auto& a : c.system.arrivals) p.lambda.push_back(a.mean());
  p.htp = heavy_traffic_point(R, p.lambda);
  p.sys = c.system.type == "scheduling" ? System::scheduling(c.system.arrivals, *c.system.schedules)
                                        : System::scheduling_fading(c.system.arrivals, *c.system.fading);
  const auto& idom = p.htp->interior_dominant;
  const auto& dom = p.htp->dominant;
  p.face = !idom.empty() ? idom.front() : (!dom.empty() ? dom.front() : 0);
  p.eps = p.htp->eps[p.face];
  p.c = R.face(p.face).c;
  out.push_back(std::move(p));
  return out;
}

inline MetricSpec metric_by_name(const std::string& name, const OperatingPoint& p, const CapacityRegion& R,
                                 const ExperimentConfig& c) {
  if (name == "sum_q") return MetricSpec::sum_q();
  if (name == "q_norm^2") return MetricSpec::q_norm2();
  if (name == "cu") return MetricSpec::cu(p.c);
  if (name == "face_freq") {
    if (is_routing(c)) throw Error(ErrorCode::config, "face_freq needs a scheduling system");
    const auto& h = R.face(p.face);
    if (c.system.type == "scheduling_fading")
      return MetricSpec::face_freq_fading(h.c, fading_face_values(*c.system.fading, h.c));
    return MetricSpec::face_freq(h.c, h.b);
  }
  if (name.rfind("cq", 0) == 0) {
    int n = 1;
    if (name.size() > 2) {
      if (name[2] != '^') throw Error(ErrorCode::config, "unknown metric " + name);
      n = std::stoi(name.substr(3));
    }
    return MetricSpec::cq(p.c, n);
  }
  if (name.rfind("qperp^", 0) == 0) return MetricSpec::qperp(p.c, std::stod(name.substr(6)));
  throw Error(ErrorCode::config, "unknown metric " + name);
}

inline std::vector<std::string> default_metrics(const ExperimentConfig& c) {
  if (is_routing(c)) return {"sum_q", "qperp^2", "cu"};
  return {"cq", "cq^2", "q_norm^2", "qperp^2", "cu", "face_freq"};
}

// ---- command results ----

struct CommandResult {
  int exit_code = ok;
  json data;
  std::string table;
  std::string csv;
  std::string message;  // stderr text on failure
};

inline std::string num6(double x) { return std::isfinite(x) ? fmt::format("{:.6g}", x) : std::string("-"); }

inline std::string csv_num(double x) { return std::isfinite(x) ? fmt::format("{:.17g}", x) : std::string(); }

// Minimal fixed-width table.
class Table {
 public:
  explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  std::string str() const {
    std::vector<std::size_t> w;
    for (const auto& r : rows_)
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (w.size() <= i) w.push_back(0);
        w[i] = std::max(w[i], r[i].size());
      }
    std::string out;
    for (std::size_t ri = 0; ri < rows_.size(); ++ri) {
      for (std::size_t i = 0; i < rows_[ri].size(); ++i)
        out += fmt::format("{:<{}}{}", rows_[ri][i], w[i], i + 1 < rows_[ri].size() ? "  " : "");
      out += "\n";
      if (ri == 0) {
        std::size_t tot = 0;
        for (auto x : w) tot += x + 2;
        out += std::string(tot > 2 ? tot - 2 : 0, '-') + "\n";
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

// ---- region ----

inline CommandResult cmd_region(const ExperimentConfig& c) {
  CommandResult res;
  const auto R = build_region(c);
  json j = region_to_json(R);
  json faces = json::array();
  Table t({"face", "c", "b", "vertices"});
  for (std::size_t k = 0; k < R.K(); ++k) {
    const auto& h = R.hyperplanes[k];
    const auto verts = face_vertices(R, k);
    faces.push_back({{"face", k + 1}, {"c", h.c}, {"b", h.b}, {"vertices", verts}});
    std::string cs = "(", vs;
    for (std::size_t l = 0; l < h.c.size(); ++l) cs += (l ? ", " : "") + num6(h.c[l]);
    cs += ")";
    for (const auto& v : verts) {
      vs += vs.empty() ? "(" : " (";
      for (std::size_t l = 0; l < v.size(); ++l) vs += (l ? ", " : "") + num6(v[l]);
      vs += ")";
    }
    t.add({std::to_string(k + 1), cs, num6(h.b), vs});
  }
  j["faces"] = faces;
  res.table = fmt::format("K = {}\n{}", R.K(), t.str());
  std::ostringstream csv;
  csv << "face";
  for (std::size_t l = 0; l < R.L; ++l) csv << ",c_" << l + 1;
  csv << ",b\n";
  for (std::size_t k = 0; k < R.K(); ++k) {
    csv << k + 1;
    for (double x : R.hyperplanes[k].c) csv << "," << csv_num(x);
    csv << "," << csv_num(R.hyperplanes[k].b) << "\n";
  }
  res.csv = csv.str();
  if (c.expected_region) {
    const auto& E = *c.expected_region;
    bool same = E.L == R.L && E.K() == R.K();
    for (std::size_t k = 0; same && k < R.K(); ++k) {
      bool found = false;
      for (const auto& h : E.hyperplanes) {
        double d = std::abs(h.b - R.hyperplanes[k].b);
        for (std::size_t l = 0; l < R.L; ++l) d = std::max(d, std::abs(h.c[l] - R.hyperplanes[k].c[l]));
        found = found || d <= 1e-9;
      }
      same = found;
    }
    j["matches_expected"] = same;
    res.table += fmt::format("matches expected region: {}\n", same ? "yes" : "no");
  }
  res.data = j;
  return res;
}

// ---- bounds ----

inline CommandResult cmd_bounds(const ExperimentConfig& c) {
  CommandResult res;
  const auto R = build_region(c);
  const auto pts = operating_points(c);
  json all = json::array();
  std::ostringstream csv;
  csv << "eps," << BoundReport::csv_header() << "\n";
  Table t({"eps", "bound", "n", "face", "dominant", "correction", "total", "eps^n*limit", "flags"});
  auto emit = [&](double eps, const BoundReport& b, std::size_t face) {
    json bj = b.to_json();
    bj["face"] = face + 1;
    all.push_back(bj);
    csv << csv_num(eps) << "," << b.csv_row() << "\n";
    std::string flags;
    if (b.asymptotic_only) flags += "asymptotic ";
    if (b.structural_estimate) flags += "structural ";
    if (b.out_of_regime) flags += "out-of-regime ";
    if (b.kind == BoundKind::lower && b.raw_total < 0) flags += "floored ";
    t.add({num6(eps), b.name, std::to_string(b.n), std::to_string(face + 1), num6(b.dominant_term),
           num6(b.correction), num6(b.total), num6(b.ht_limit), flags});
  };
  const double n2 = c.n2_hat.value_or(0.0);
  for (const auto& p : pts) {
    std::vector<std::size_t> faces;
    if (is_routing(c)) {
      faces = {0};
    } else if (c.ht) {
      faces = {p.face};
    } else {
      faces = p.htp->interior_dominant.empty() ? p.htp->dominant : p.htp->interior_dominant;
    }
    for (std::size_t k : faces) {
      ZetaParams z;
      if (c.system.type == "single_server") {
        z = {p.sys.arrival_total.variance(), p.sys.services[0].variance(), p.eps};
        emit(p.eps, lb_single_server(z, static_cast<double>(p.sys.services[0].max_value())), k);
      } else if (c.system.type == "routing") {
        double nu2 = 0.0;
        for (const auto& s : p.sys.services) nu2 += s.variance();
        z = {p.sys.arrival_total.variance(), nu2, p.eps};
        const auto L = p.sys.L;
        const double smax = static_cast<double>(p.sys.s_max());
        emit(p.eps, lb_routing(z, L, smax), k);
        auto up = ub_jsq(z, L, smax, n2);
        if (!c.n2_hat) up.notes.push_back("n2_hat not supplied; 0 used");
        emit(p.eps, up, k);
      } else {
        RateVector s2;
        for (const auto& a : p.sys.arrivals) s2.push_back(a.variance());
        const auto tpl = scheduling_template(c);
        const double g = tpl.gamma(R, k), th = tpl.theta(R, k);
        const double smax = static_cast<double>(tpl.s_max());
        const double ek = p.htp->eps[k];
        if (tpl.fading) {
          auto fb = fading_bounds(R, tpl.model, *p.htp, k, s2, smax, n2, g, th);
          z = {fb.lower.constants.at("sigma2"), fb.lower.constants.at("nu2"), ek};
          emit(ek, fb.lower, k);
          emit(ek, fb.upper, k);
        } else {
          auto lo = lb_scheduling(R, *p.htp, k, s2);
          z = {lo.constants.at("sigma2"), 0.0, ek};
          emit(ek, lo, k);
          emit(ek, ub_mws(R, *p.htp, k, s2, smax, n2, g, th), k);
        }
      }
      for (int n : c.moments) {
        if (n < 2) continue;
        emit(z.eps, lb_nth_moment(z, n), k);
        emit(z.eps, ub_nth_moment(z, n), k);
      }
    }
  }
  res.data = {{"bounds", all}};
  res.table = t.str();
  res.csv = csv.str();
  return res;
}

// ---- simulate ----

inline SimConfig sim_config_for(const ExperimentConfig& c, const OperatingPoint& p, const CapacityRegion& R,
                                const std::vector<std::string>& names) {
  SimConfig s = c.sim;
  if (c.ht && c.ht->horizon_scale > 0.0 && std::isfinite(p.eps)) {
    s.horizon = horizon_for(p.eps, c.sim.horizon, c.ht->horizon_scale);
    if (c.sim.burn_in >= 0) s.burn_in = std::max(c.sim.burn_in, s.horizon / 10);
  }
  s.metrics.clear();
  for (const auto& n : names) s.metrics.push_back(metric_by_name(n, p, R, c));
  s.invariant_c = p.c;
  s.a_max_override = c.checks.a_max_override;
  s.s_max_override = c.checks.s_max_override;
  return s;
}

inline std::string estimates_csv_header() { return "eps,metric,mean,ci_low,ci_high,batches,samples"; }

inline CommandResult cmd_simulate(const ExperimentConfig& c) {
  CommandResult res;
  const auto R = build_region(c);
  const auto pts = operating_points(c);
  const auto names = c.metric_names.empty() ? default_metrics(c) : c.metric_names;
  std::ostringstream csv;
  csv << estimates_csv_header() << "\n";
  Table t({"eps", "metric", "mean", "ci_low", "ci_high"});
  json runs = json::array();
  std::string violation;
  for (const auto& p : pts) {
    auto s = sim_config_for(c, p, R, names);
    s.check_invariants = true;
    const auto est = estimate(p.sys, c.policy, s);
    json rj = est.to_json();
    rj["eps"] = p.eps;
    rj["lambda"] = p.lambda;
    runs.push_back(rj);
    for (const auto& m : est.order) {
      const auto& e = est.at(m);
      csv << csv_num(p.eps) << "," << m << "," << csv_num(e.mean) << "," << csv_num(e.ci_low) << ","
          << csv_num(e.ci_high) << "," << e.batches << "," << e.samples << "\n";
      t.add({num6(p.eps), m, num6(e.mean), num6(e.ci_low), num6(e.ci_high)});
    }
    for (const auto& r : est.invariant_reports)
      if (!r.ok() && violation.empty()) violation = r.name + " violated: " + r.to_json().dump();
  }
  res.data = {{"runs", runs}};
  res.csv = csv.str();
  res.table = t.str();
  if (!violation.empty()) {
    res.exit_code = invariant_error;
    res.message = violation;
    res.table += "INVARIANT VIOLATION: " + violation + "\n";
  } else {
    res.table += "all pathwise invariants hold\n";
  }
  return res;
}

// ---- sweep ----

inline double default_tolerance(const ExperimentConfig& c) { return is_routing(c) ? 0.15 : 0.20; }

inline SweepResult run_sweep(const ExperimentConfig& c) {
  if (!c.ht) throw Error(ErrorCode::config, "sweep needs a heavy_traffic block");
  SweepOptions o;
  o.eps = c.ht->eps;
  o.sim = c.sim;
  o.sim.a_max_override = c.checks.a_max_override;
  o.sim.s_max_override = c.checks.s_max_override;
  o.horizon_scale = c.ht->horizon_scale;
  if (is_routing(c)) return routing_sweep(c.system.services, c.ht->family, c.policy, o);
  const auto tpl = scheduling_template(c);
  const auto R = tpl.region();
  return scheduling_sweep(tpl, *c.ht->face, anchor_for(c, R, *c.ht->face), c.policy, o);
}

inline CommandResult cmd_sweep(const ExperimentConfig& c) {
  CommandResult res;
  const auto sw = run_sweep(c);
  const std::string first = is_routing(c) ? "sum_q" : "cq";
  const double tol = c.verdict_tolerance.value_or(default_tolerance(c));
  const auto rows = sw.metric_rows(first);
  Table t({"eps", "mean", "ci", "scaled", "target", "lower", "upper", "verdict"});
  json verdicts = json::array();
  bool all_pass = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const bool lower_ok = r.est.ci_high >= r.lower_bound;
    const bool upper_ok = r.est.ci_low <= r.upper_bound;
    std::string verdict = lower_ok && upper_ok ? "PASS" : "FAIL";
    const bool last = i + 1 == rows.size();
    double rel = std::numeric_limits<double>::quiet_NaN();
    if (last && rows.size() > 1) {
      rel = std::abs(r.scaled - r.target) / r.target;
      if (rel > tol) verdict = "FAIL";
    }
    all_pass = all_pass && verdict == "PASS";
    verdicts.push_back({{"eps", r.eps},
                        {"lower_ok", lower_ok},
                        {"upper_ok", upper_ok},
                        {"relative_gap", std::isfinite(rel) ? json(rel) : json()},
                        {"verdict", verdict}});
    t.add({num6(r.eps), num6(r.est.mean), "[" + num6(r.est.ci_low) + ", " + num6(r.est.ci_high) + "]",
           num6(r.scaled), num6(r.target), num6(r.lower_bound), num6(r.upper_bound),
           verdict + (last && rows.size() > 1 ? fmt::format(" (gap {:.3g}, tol {})", rel, tol) : "")});
  }
  res.data = sw.to_json();
  res.data["verdicts"] = verdicts;
  res.data["tolerance"] = tol;
  res.data["convergence_checked"] = rows.size() > 1;
  res.csv = sw.to_csv();
  res.table = t.str();
  if (rows.size() <= 1) res.table += "single eps: no convergence verdict\n";
  if (!all_pass) {
    res.exit_code = verification_error;
    res.message = "sweep verdict FAIL";
  }
  return res;
}

// ---- verify ----

namespace detail {

// Brute-force membership: x lies in conv(P) iff it is a convex combination
// of some affinely independent subset of at most L+1 points.
inline bool in_hull_bruteforce(const std::vector<RateVector>& P, const RateVector& x) {
  const std::size_t L = x.size(), n = P.size();
  constexpr double tol = 1e-9;
  std::vector<std::size_t> idx;
  std::function<bool(std::size_t)> rec = [&](std::size_t start) -> bool {
    if (!idx.empty()) {
      const std::size_t m = idx.size();
      Eigen::MatrixXd A(L + 1, m);
      Eigen::VectorXd b(L + 1);
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t l = 0; l < L; ++l) A(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = P[idx[j]][l];
        A(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(j)) = 1.0;
      }
      for (std::size_t l = 0; l < L; ++l) b(static_cast<Eigen::Index>(l)) = x[l];
      b(static_cast<Eigen::Index>(L)) = 1.0;
      Eigen::VectorXd w = A.colPivHouseholderQr().solve(b);
      if ((A * w - b).norm() <= tol && w.minCoeff() >= -tol) return true;
    }
    if (idx.size() == L + 1) return false;
    for (std::size_t i = start; i < n; ++i) {
      idx.push_back(i);
      if (rec(i + 1)) return true;
      idx.pop_back();
    }
    return false;
  };
  return rec(0);
}

inline std::vector<RateVector> zero_closure(const ScheduleSet& S) {
  std::set<QueueVector> pts;
  const std::size_t L = S.dim();
  for (const auto& s : S.schedules())
    for (std::size_t mask = 0; mask < (std::size_t{1} << L); ++mask) {
      QueueVector q = s;
      for (std::size_t l = 0; l < L; ++l)
        if ((mask >> l) & 1u) q[l] = 0;
      pts.insert(q);
    }
  std::vector<RateVector> out;
  for (const auto& q : pts) out.push_back(to_rate(q));
  return out;
}

}  // namespace detail

struct CheckOutcome {
  std::string name;
  bool hard = false;  // exact invariant rather than statistical check
  bool pass = true;
  std::string cause;
  json detail;
};

inline CommandResult cmd_verify(const ExperimentConfig& c) {
  CommandResult res;
  std::vector<CheckOutcome> checks;
  const auto R = build_region(c);

  if (c.expected_region) {
    auto rr = cmd_region(c);
    checks.push_back({"region_matches_expected", true, rr.data["matches_expected"].get<bool>(), "", {}});
  }
  if (c.system.type == "scheduling" && R.L <= 3) {
    const auto P = detail::zero_closure(*c.system.schedules);
    RandomStream rng(c.seed, 9001);
    RateVector hi(R.L, 0.0);
    for (const auto& p : P)
      for (std::size_t l = 0; l < R.L; ++l) hi[l] = std::max(hi[l], p[l]);
    int agree = 0;
    for (int i = 0; i < c.checks.oracle_points; ++i) {
      RateVector x(R.L);
      for (std::size_t l = 0; l < R.L; ++l) x[l] = rng.uniform() * 1.2 * hi[l];
      agree += member(R, x) == detail::in_hull_bruteforce(P, x);
    }
    checks.push_back({"geometry_oracle", true, agree == c.checks.oracle_points, "",
                      {{"agree", agree}, {"points", c.checks.oracle_points}}});
  }
  if (!c.system.onoff.empty()) {
    const auto A = onoff_downlink_region(c.system.onoff);
    bool same = A.K() == R.K();
    for (std::size_t k = 0; same && k < R.K(); ++k) {
      double d = std::abs(A.hyperplanes[k].b - R.hyperplanes[k].b);
      for (std::size_t l = 0; l < R.L; ++l) d = std::max(d, std::abs(A.hyperplanes[k].c[l] - R.hyperplanes[k].c[l]));
      same = d <= 1e-9;
    }
    checks.push_back({"onoff_region_agreement", true, same, "", {}});
  }

  const auto pts = operating_points(c);
  for (const auto& p : pts) {
    const std::string tag = fmt::format("eps={:.6g}", p.eps);
    std::vector<std::string> names{"cu"};
    if (!is_routing(c)) names.push_back("face_freq");
    auto s = sim_config_for(c, p, R, names);
    s.check_invariants = true;
    const auto est = estimate(p.sys, c.policy, s);
    for (const auto& r : est.invariant_reports)
      checks.push_back({r.name + " " + tag, true, r.ok(), r.ok() ? "" : "violations", r.to_json()});

    const auto& cu = est.at("cu");
    if (is_routing(c)) {
      const double want = p.eps / std::sqrt(static_cast<double>(p.sys.L));
      checks.push_back({"unused_service_equality " + tag, false, cu.covers(want), cu.covers(want) ? "" : "outside CI",
                        {{"estimate", to_json(cu)}, {"expected", want}}});
    } else {
      const bool pass = cu.mean <= p.eps + 2.0 * cu.width();
      checks.push_back({"unused_service_inequality " + tag, false, pass, pass ? "" : "above eps",
                        {{"estimate", to_json(cu)}, {"eps", p.eps}}});
      const auto tpl = scheduling_template(c);
      if (p.htp->is_interior_dominant(p.face)) {
        const auto chk = pi_k_bound_check(est.at("face_freq"), p.eps, tpl.gamma(R, p.face));
        checks.push_back({"face_frequency_bound " + tag, false, chk.pass, chk.pass ? "" : "off-face frequency too high",
                          chk.to_json()});
      }
    }

    // Hajek drift of ||Q_perp|| above kappa on a fresh path; Q_perp vanishes when L = 1
    if (p.sys.L < 2) continue;
    HajekDiagnostic hd(perp_norm_functional(p.c), c.checks.kappa,
                       2.0 * std::sqrt(static_cast<double>(p.sys.L)) *
                           static_cast<double>(std::max(p.sys.a_max(), p.sys.s_max())));
    run_path(p.sys, c.policy, s.horizon, c.seed, 1000, [&](const SlotRecord& r) { hd(r); });
    const auto h = hd.result();
    const bool pass = !h.insufficient_data && h.negative_drift_confirmed && h.c2_violations == 0;
    std::string cause;
    if (h.insufficient_data) cause = "insufficient-data";
    else if (!h.negative_drift_confirmed) cause = "drift not negative";
    else if (h.c2_violations) cause = "C2 violations";
    checks.push_back({"hajek_perp_drift " + tag, false, pass, cause, h.to_json()});
  }

  Table t({"check", "kind", "result", "cause"});
  json cj = json::array();
  bool all = true;
  for (const auto& k : checks) {
    all = all && k.pass;
    t.add({k.name, k.hard ? "exact" : "statistical", k.pass ? "PASS" : "FAIL", k.cause});
    cj.push_back({{"name", k.name}, {"hard", k.hard}, {"pass", k.pass}, {"cause", k.cause}, {"detail", k.detail}});
  }
  res.data = {{"checks", cj}, {"pass", all}};
  res.table = t.str();
  std::ostringstream csv;
  csv << "check,kind,result,cause\n";
  for (const auto& k : checks)
    csv << k.name << "," << (k.hard ? "exact" : "statistical") << "," << (k.pass ? "PASS" : "FAIL") << "," << k.cause
        << "\n";
  res.csv = csv.str();
  if (!all) {
    res.exit_code = verification_error;
    res.message = "verification failed";
  }
  return res;
}

// ---- artifacts ----

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::string version = kVersion;
  std::string command;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  int exit_code = 0;

  json to_json() const {
    return {{"config_hash", fmt::format("{:016x}", config_hash)},
            {"version", version},
            {"command", command},
            {"outputs", outputs},
            {"wall_clock_seconds", wall_clock_seconds},
            {"seed", seed},
            {"exit_code", exit_code}};
  }
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::config, "cannot write " + p.string());
  out << content;
}

using Command = CommandResult (*)(const ExperimentConfig&);

inline Command command_by_name(const std::string& name) {
  if (name == "region") return cmd_region;
  if (name == "bounds") return cmd_bounds;
  if (name == "simulate") return cmd_simulate;
  if (name == "sweep") return cmd_sweep;
  if (name == "verify") return cmd_verify;
  throw Error(ErrorCode::config, "unknown command " + name);
}

// Runs a command, writes <cmd>.json, <cmd>.csv and manifest.json into the output directory.
inline CommandResult run_command(const std::string& name, const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  CommandResult res = command_by_name(name)(c);
  std::filesystem::create_directories(c.out_dir);
  const std::filesystem::path dir(c.out_dir);
  RunManifest m;
  m.config_hash = config_hash(c);
  m.command = name;
  m.seed = c.seed;
  m.exit_code = res.exit_code;
  write_file(dir / (name + ".json"), res.data.dump(2) + "\n");
  m.outputs.push_back(name + ".json");
  if (!res.csv.empty()) {
    write_file(dir / (name + ".csv"), res.csv);
    m.outputs.push_back(name + ".csv");
  }
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(dir / "manifest.json", m.to_json().dump(2) + "\n");
  return res;
}

}  // namespace htq::cli
