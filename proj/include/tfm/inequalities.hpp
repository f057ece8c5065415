#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tfm/means.hpp"
#include "tfm/spaces.hpp"
#include "tfm/transforms.hpp"

namespace tfm {

inline constexpr double kDefaultTol = 1e-9;

struct InequalityReport {
  std::string theorem_id;
  std::string space_kind;
  std::string tau_kind;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double tol = kDefaultTol;
  bool satisfied = false;
  bool diagnostic = false;
  std::uint64_t seed = 0;
  std::string digest;
  std::string detail;
};

/// satisfied iff lhs - rhs >= -tol (1 + |lhs|)
inline InequalityReport make_report(std::string id, std::string space_kind, std::string tau_kind, double lhs,
                                    double rhs, double tol = kDefaultTol) {
  InequalityReport r;
  r.theorem_id = std::move(id);
  r.space_kind = std::move(space_kind);
  r.tau_kind = std::move(tau_kind);
  r.lhs = lhs;
  r.rhs = rhs;
  r.margin = lhs - rhs;
  r.tol = tol;
  r.satisfied = r.margin >= -tol * (1.0 + std::abs(lhs));
  return r;
}

/// Equality-style check: lhs = allowed error, rhs = observed error.
inline InequalityReport make_within_report(std::string id, std::string space_kind, std::string tau_kind,
                                           double allowed, double observed) {
  InequalityReport r = make_report(std::move(id), std::move(space_kind), std::move(tau_kind), allowed, observed, 0.0);
  r.satisfied = observed <= allowed;
  return r;
}

namespace detail {

inline void describe(std::ostringstream& os, const Point& p) {
  os << 'c' << p.component << ':';
  if (p.is_vector()) {
    for (Eigen::Index i = 0; i < p.coords().size(); ++i) os << p.coords()[i] << ',';
  } else {
    os << 'e' << p.tree_point().edge << '@' << p.tree_point().offset;
  }
  os << ';';
}

inline void describe(std::ostringstream& os, const Transform& t) {
  os << t.name() << '(' << t.param();
  for (const auto& term : t.terms()) {
    os << ',' << term.weight << '*';
    describe(os, term.inner[0]);
  }
  os << ')';
}

/// FNV-1a over a canonical rendering of the inputs.
inline std::string digest(const Space& s, const Transform* tau, const DiscreteDistribution* dist,
                          std::initializer_list<const Point*> pts) {
  std::ostringstream os;
  os.precision(17);
  os << s.kind_name() << '/' << s.component_count() << '|';
  if (tau) describe(os, *tau);
  os << '|';
  if (dist)
    for (const auto& a : dist->atoms()) {
      describe(os, a.point);
      os << a.weight << ';';
    }
  os << '|';
  for (const Point* p : pts) describe(os, *p);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline double mass_at(const Space& s, const DiscreteDistribution& dist, const Point& p) {
  double m = 0.0;
  for (const auto& a : dist.atoms())
    if (s.distance(a.point, p) <= kPointTol) m += a.weight;
  return m;
}

inline void require_distinct(const Space& s, const Point& m, const Point& q, const char* who) {
  if (s.distance(m, q) <= kPointTol) throw std::invalid_argument(std::string(who) + ": q must differ from m");
}

}  // namespace detail

/// Rejects solver output whose certified gap exceeds 1e-7 * scale.
inline void require_certified(const MeanResult& r, double scale = 1.0) {
  if (r.certified_gap > 1e-7 * std::max(1.0, scale))
    throw std::runtime_error("mean solver gap " + std::to_string(r.certified_gap) + " too large to certify m");
}

/// E[d(Y,q)^2 - d(Y,m)^2] >= d(q,m)^2 with m the Frechet mean.
inline InequalityReport vi_hadamard_mean(const Space& s, const DiscreteDistribution& dist, const Point& m,
                                         const Point& q) {
  const Transform sq = Transform::power(2.0);
  double lhs = 0.0;
  for (const auto& a : dist.atoms()) {
    const double dq = s.distance(a.point, q), dm = s.distance(a.point, m);
    lhs += a.weight * (dq * dq - dm * dm);
  }
  const double d = s.distance(q, m);
  auto r = make_report("hadamard_mean", s.kind_name(), sq.name(), lhs, d * d);
  r.digest = detail::digest(s, &sq, &dist, {&m, &q});
  return r;
}

inline InequalityReport vi_hadamard_mean(const Space& s, const DiscreteDistribution& dist, const Point& q) {
  const auto mr = frechet_mean(s, Transform::power(2.0), dist);
  require_certified(mr, mr.objective);
  return vi_hadamard_mean(s, dist, mr.minimizer, q);
}

/// E[tau(d(Y,q)) - tau(d(Y,m))] >= 1/2 d(q,m)^2 E[tau'+(max(d(Y,m), d(Y,q)))].
inline InequalityReport vi_transformed(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                                       const Point& m, const Point& q) {
  detail::require_distinct(s, m, q, "vi_transformed");
  double lhs = 0.0, curv = 0.0;
  for (const auto& a : dist.atoms()) {
    const double dq = s.distance(a.point, q), dm = s.distance(a.point, m);
    lhs += a.weight * (tau.value(dq) - tau.value(dm));
    curv += a.weight * tau.second_right(std::max(dm, dq));
  }
  const double d = s.distance(q, m);
  auto r = make_report("transformed_mean", s.kind_name(), tau.name(), lhs, 0.5 * d * d * curv);
  r.digest = detail::digest(s, &tau, &dist, {&m, &q});
  return r;
}

/// E[tau(d(Y,q)) - tau(d(Y,m))] >= tau(d(q,m)) P(Y = m); needs tau'(0) = 0 and, when P(Y = m) > 0,
/// a nonnegative one-sided slope of the off-atom part at m towards q.
inline InequalityReport vi_pointmass(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                                     const Point& m, const Point& q) {
  const double d0 = tau.first(0.0);
  if (d0 != 0.0)
    throw std::invalid_argument("vi_pointmass needs tau'(0) = 0, but " + tau.name() + " has tau'(0) = " +
                                std::to_string(d0));
  const double at_m = detail::mass_at(s, dist, m);
  if (at_m > 0.0 && s.distance(q, m) > kPointTol) {
    // The bound rests on m minimizing the off-atom part to first order along m -> q. Near-atom
    // minimizers of transforms with tau'(0) = 0 land on the atom numerically without being optimal there.
    const Geodesic g = s.geodesic(m, q);
    double slope = 0.0, scale = 0.0;
    for (const auto& a : dist.atoms()) {
      const double dm = s.distance(a.point, m);
      if (dm <= kPointTol) continue;
      slope += a.weight * tau.first(dm) * s.one_sided_slope(a.point, g, 0.0, Side::Right);
      scale += a.weight * tau.first(dm);
    }
    if (slope < -1e-9 * (1.0 + scale))
      throw std::invalid_argument("vi_pointmass: m carries mass " + std::to_string(at_m) +
                                  " but is not a minimizer along m -> q (off-atom slope " + std::to_string(slope) + ")");
  }
  double lhs = 0.0;
  for (const auto& a : dist.atoms())
    lhs += a.weight * (tau.value(s.distance(a.point, q)) - tau.value(s.distance(a.point, m)));
  const double rhs = tau.value(s.distance(q, m)) * at_m;
  auto r = make_report("point_mass", s.kind_name(), tau.name(), lhs, rhs);
  r.digest = detail::digest(s, &tau, &dist, {&m, &q});
  return r;
}

struct BowtieSpec {
  Point m;
  Point q;
  double eta = 0.5;
};

/// y in A(m, q, eta): both endpoint slopes of the profile along m -> q satisfy v^2 <= 1 - eta^2.
inline bool bowtie_membership(const Space& s, const Point& y, const Geodesic& g, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("bowtie eta must lie in (0, 1)");
  if (!(g.length() > kPointTol)) throw std::invalid_argument("bowtie needs q != m");
  // endpoint atoms have slopes +-1
  if (s.distance(y, g.start()) <= kPointTol || s.distance(y, g.end()) <= kPointTol) return false;
  const double v0 = s.one_sided_slope(y, g, 0.0, Side::Right);
  const double v1 = s.one_sided_slope(y, g, g.length(), Side::Left);
  return std::max(v0 * v0, v1 * v1) <= 1.0 - eta * eta;
}

inline bool bowtie_membership(const Space& s, const Point& y, const BowtieSpec& spec) {
  return bowtie_membership(s, y, s.geodesic(spec.m, spec.q), spec.eta);
}

/// E[d(Y,q) - d(Y,m)] >= 1/2 eta^2 d(q,m)^2 E[max(d(Y,m), d(Y,q))^{-1} 1_A(Y)] for a median m.
inline InequalityReport vi_median(const Space& s, const DiscreteDistribution& dist, const Point& m, const Point& q,
                                  double eta) {
  detail::require_distinct(s, m, q, "vi_median");
  const Geodesic g = s.geodesic(m, q);
  double lhs = 0.0, inner = 0.0;
  for (const auto& a : dist.atoms()) {
    const double dq = s.distance(a.point, q), dm = s.distance(a.point, m);
    lhs += a.weight * (dq - dm);
    if (bowtie_membership(s, a.point, g, eta)) inner += a.weight / std::max(dm, dq);
  }
  const double d = g.length();
  auto r = make_report("median_bowtie", s.kind_name(), "linear", lhs, 0.5 * eta * eta * d * d * inner);
  const Transform lin = Transform::linear();
  r.digest = detail::digest(s, &lin, &dist, {&m, &q});
  return r;
}

struct B0Certificate {
  bool member = false;
  double x0 = 0.0;
  double nearest_atom = 0.0;  // min_i d(y_i, m)
};

struct AffineReduction {
  InequalityReport report;
  B0Certificate b0;
};

inline B0Certificate b0_certificate(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                                    const Point& m) {
  B0Certificate c;
  c.x0 = tau.x0();
  c.nearest_atom = kInf;
  for (const auto& a : dist.atoms()) c.nearest_atom = std::min(c.nearest_atom, s.distance(a.point, m));
  c.member = c.x0 < kInf && c.nearest_atom >= c.x0 * (1.0 - 1e-12);
  return c;
}

/// E[tau(d(Y,q)) - tau(d(Y,m))] >= tau'(x0) E[d(Y,q) - d(Y,m)] for m in B0 = {p : P(d(Y,p) < x0) = 0}.
inline AffineReduction vi_affine_reduction(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                                           const Point& m, const Point& q) {
  const auto b0 = b0_certificate(s, tau, dist, m);
  if (!(b0.x0 < kInf)) throw std::invalid_argument("vi_affine_reduction needs x0 < inf, " + tau.name() + " has none");
  if (!b0.member)
    throw std::invalid_argument("vi_affine_reduction: m is not in B0, nearest atom at " +
                                std::to_string(b0.nearest_atom) + " < x0 = " + std::to_string(b0.x0));
  double lhs = 0.0, med = 0.0;
  for (const auto& a : dist.atoms()) {
    const double dq = s.distance(a.point, q), dm = s.distance(a.point, m);
    lhs += a.weight * (tau.value(dq) - tau.value(dm));
    med += a.weight * (dq - dm);
  }
  auto r = make_report("affine_reduction", s.kind_name(), tau.name(), lhs, tau.first(b0.x0) * med);
  r.digest = detail::digest(s, &tau, &dist, {&m, &q});
  return AffineReduction{r, b0};
}

/// Pieces of segment `seg` at distance >= x0 from every atom (B0 intersected with the segment).
inline std::vector<Segment> b0_intersect(const Space& s, const DiscreteDistribution& dist, const Segment& seg,
                                         double x0) {
  if (seg.length <= 0.0) {
    for (const auto& a : dist.atoms())
      if (s.distance(a.point, seg.a) < x0 * (1.0 - 1e-12)) return {};
    return {seg};
  }
  const Geodesic g = s.geodesic(seg.a, seg.b);
  const double L = g.length();
  std::vector<std::pair<double, double>> banned;
  for (const auto& a : dist.atoms()) {
    auto f = [&](double t) { return s.distance(a.point, g.eval(t)); };
    const auto pr = s.project_to_geodesic(a.point, g);
    if (pr.distance >= x0 * (1.0 - 1e-12)) continue;
    auto edge = [&](double inside, double outside) {
      if (f(outside) < x0) return outside;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (inside + outside);
        if (mid == inside || mid == outside) break;
        if (f(mid) < x0) inside = mid;
        else outside = mid;
      }
      return outside;
    };
    banned.emplace_back(edge(pr.t, 0.0), edge(pr.t, L));
  }
  std::sort(banned.begin(), banned.end());
  std::vector<Segment> out;
  double cur = 0.0;
  bool open_from_start = true;
  auto push = [&](double a, double b, bool closed_a, bool closed_b) {
    (void)closed_a;
    (void)closed_b;
    if (b >= a) out.push_back(Segment{g.eval(a), g.eval(b), b - a});
  };
  for (const auto& [lo, hi] : banned) {
    if (lo > cur || (open_from_start && lo > 0.0)) push(cur, lo, true, true);
    cur = std::max(cur, hi);
    open_from_start = false;
  }
  if (cur < L || banned.empty()) push(cur, L, true, true);
  // banned intervals touching the ends exclude them
  std::vector<Segment> kept;
  for (const auto& sgm : out) {
    bool ok = true;
    for (const auto& a : dist.atoms())
      if (s.distance(a.point, sgm.a) < x0 * (1.0 - 1e-9) || s.distance(a.point, sgm.b) < x0 * (1.0 - 1e-9)) ok = false;
    if (ok) kept.push_back(sgm);
  }
  return kept;
}

/// tau-mean set equals B0 intersected with the median set; reported as a Hausdorff distance.
inline InequalityReport affine_set_identity(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                                            double allowed = 1e-8) {
  const double x0 = tau.x0();
  if (!(x0 < kInf)) throw std::invalid_argument("affine_set_identity needs x0 < inf");
  const Segment means = mean_set(s, tau, dist);
  const Segment med = median_set(s, dist);
  const auto pieces = b0_intersect(s, dist, med, x0);
  InequalityReport r;
  if (pieces.size() != 1) {
    r = make_within_report("affine_set_identity", s.kind_name(), tau.name(), allowed, kInf);
    r.detail = "B0 intersected with the median set has " + std::to_string(pieces.size()) + " pieces";
  } else {
    r = make_within_report("affine_set_identity", s.kind_name(), tau.name(), allowed, hausdorff(s, means, pieces[0]));
  }
  r.digest = detail::digest(s, &tau, &dist, {});
  return r;
}

/// Bound for a median m when Y lives on the geodesic g (q arbitrary, p its projection onto g).
inline InequalityReport vi_median_on_geodesic(const Space& s, const DiscreteDistribution& dist, const Geodesic& g,
                                              const Point& m, const Point& q) {
  const double L = g.length();
  const double on_tol = 1e-9 * (1.0 + L);
  std::vector<double> ts;
  for (const auto& a : dist.atoms()) {
    const auto pr = s.project_to_geodesic(a.point, g);
    if (pr.distance > on_tol) throw std::invalid_argument("vi_median_on_geodesic: atom off the geodesic");
    ts.push_back(pr.t);
  }
  const auto pm = s.project_to_geodesic(m, g);
  if (pm.distance > on_tol) throw std::invalid_argument("vi_median_on_geodesic: m off the geodesic");
  const auto pp = s.project_to_geodesic(q, g);
  // orientation: gamma(0) = m and gamma^{-1}(p) >= 0
  const double sigma = pp.t >= pm.t ? 1.0 : -1.0;
  double a_minus = 0.0, a0 = 0.0, a_plus = 0.0;
  std::vector<double> xs;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& a = dist.atoms()[i];
    const double x = sigma * (ts[i] - pm.t);
    xs.push_back(x);
    if (s.distance(a.point, m) <= kPointTol) a0 += a.weight;
    else if (x < 0.0) a_minus += a.weight;
    else a_plus += a.weight;
  }
  if (std::abs(a_minus - a_plus) > a0 + 1e-9)
    throw std::invalid_argument("vi_median_on_geodesic: m is not a median along the geodesic");
  const double dqm = s.distance(q, m), dqp = s.distance(q, pp.point), dpm = s.distance(pp.point, m);
  const double reach = dqp + dpm;
  double lhs = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& a = dist.atoms()[i];
    const double dym = s.distance(a.point, m);
    lhs += a.weight * (s.distance(a.point, q) - dym);
    if (xs[i] > 0.0 && xs[i] <= reach && dym > kPointTol) tail += a.weight * (reach - dym);
  }
  const double rhs = dqm * a0 + dpm * (a_minus - a_plus) + tail;
  auto r = make_report("median_on_geodesic", s.kind_name(), "linear", lhs, rhs);
  const Transform lin = Transform::linear();
  r.digest = detail::digest(s, &lin, &dist, {&m, &q});
  return r;
}

/// E[d(Y,q) - d(Y,p)] >= d(q,p) (P(Y = p) - P(Y != p)).
inline InequalityReport vi_trivial_median(const Space& s, const DiscreteDistribution& dist, const Point& p,
                                          const Point& q) {
  double lhs = 0.0;
  for (const auto& a : dist.atoms()) lhs += a.weight * (s.distance(a.point, q) - s.distance(a.point, p));
  const double at = detail::mass_at(s, dist, p);
  return make_report("median_trivial", s.kind_name(), "linear", lhs, s.distance(q, p) * (at - (1.0 - at)));
}

struct GeneralBounds {
  double exact = 0.0;  // F(q) - F(p)
  double upper = 0.0;
  std::optional<double> upper_near;
  std::optional<double> lower;
};

namespace detail {
struct AtomDists {
  std::vector<double> dp, dq;
};
inline AtomDists atom_dists(const Space& s, const DiscreteDistribution& dist, const Point& p, const Point& q) {
  AtomDists d;
  for (const auto& a : dist.atoms()) {
    d.dp.push_back(s.distance(a.point, p));
    d.dq.push_back(s.distance(a.point, q));
  }
  return d;
}
}  // namespace detail

/// Upper bound valid for every split s >= 0.
inline double general_bound_upper(const Space& sp, const Transform& tau, const DiscreteDistribution& dist,
                                  const Point& p, const Point& q, double split) {
  if (!(split >= 0.0)) throw std::invalid_argument("general bound (upper): split must be >= 0");
  const double d = sp.distance(q, p);
  double far = 0.0, near_mass = 0.0;
  for (const auto& a : dist.atoms()) {
    const double dp = sp.distance(a.point, p);
    if (dp >= split) far += a.weight * tau.first(0.5 * d + dp);
    else near_mass += a.weight;
  }
  return d * far + tau.value(d + split) * near_mass;
}

/// Upper bound for d(q,p) <= split, split > 0.
inline double general_bound_upper_near(const Space& sp, const Transform& tau, const DiscreteDistribution& dist,
                                       const Point& p, const Point& q, double split) {
  const double d = sp.distance(q, p);
  if (!(split > 0.0) || d > split)
    throw std::invalid_argument("general bound (upper near): needs split > 0 and d(q,p) <= split");
  double at = 0.0, inner = 0.0, far = 0.0;
  for (const auto& a : dist.atoms()) {
    const double dp = sp.distance(a.point, p);
    if (dp <= kPointTol) at += a.weight;
    else if (dp < split) inner += a.weight;
    else far += a.weight * tau.first(dp);
  }
  return at * tau.value(d) + 1.5 * d * tau.first(split) * inner + d * (d / (2.0 * split) + 1.0) * far;
}

/// Lower bound for split <= d(q,p).
inline double general_bound_lower(const Space& sp, const Transform& tau, const DiscreteDistribution& dist,
                                  const Point& p, const Point& q, double split) {
  const double d = sp.distance(q, p);
  if (!(split >= 0.0) || split > d) throw std::invalid_argument("general bound (lower): needs 0 <= split <= d(q,p)");
  double far = 0.0, near_mass = 0.0;
  for (const auto& a : dist.atoms()) {
    const double dp = sp.distance(a.point, p);
    if (dp >= split) far += a.weight * (tau.value(d) - 2.0 * d * tau.first(dp));
    else near_mass += a.weight;
  }
  return far + (tau.value(d - split) - tau.value(split)) * near_mass;
}

inline GeneralBounds general_bounds(const Space& sp, const Transform& tau, const DiscreteDistribution& dist,
                                    const Point& p, const Point& q, double split) {
  GeneralBounds b;
  b.exact = variance_functional(sp, tau, dist, q, p);
  b.upper = general_bound_upper(sp, tau, dist, p, q, split);
  const double d = sp.distance(q, p);
  if (split > 0.0 && d <= split) b.upper_near = general_bound_upper_near(sp, tau, dist, p, q, split);
  if (split <= d) b.lower = general_bound_lower(sp, tau, dist, p, q, split);
  return b;
}

struct AsymptoticRow {
  double radius = 0.0;
  double increment = 0.0;   // F(q) - F(p)
  double far_ratio = 0.0;   // increment / tau(r)
  double near_ratio = 0.0;  // increment / r
  double near_bound = 0.0;  // E tau'(d(Y,p))
};

/// Probes q = p + r * direction inside the Euclidean component of p.
inline std::vector<AsymptoticRow> asymptotic_ratio_check(const Space& s, const Transform& tau,
                                                         const DiscreteDistribution& dist, const Point& p,
                                                         const std::vector<double>& radii,
                                                         std::optional<Vec> direction = std::nullopt) {
  if (!p.is_vector() || !std::holds_alternative<EuclideanSpace>(s.component(p.component)))
    throw std::invalid_argument("asymptotic_ratio_check needs p in an unbounded Euclidean component");
  Vec dir = direction.value_or(Vec::Unit(p.coords().size(), 0));
  if (dir.size() != p.coords().size() || !(dir.norm() > 0.0))
    throw std::invalid_argument("asymptotic_ratio_check: bad direction");
  dir.normalize();
  double bound = 0.0;
  for (const auto& a : dist.atoms()) bound += a.weight * tau.first(s.distance(a.point, p));
  std::vector<AsymptoticRow> rows;
  for (double r : radii) {
    if (!(r > 0.0)) throw std::invalid_argument("asymptotic_ratio_check: radii must be positive");
    const Point q = Point::vec(Vec(p.coords() + r * dir), p.component);
    AsymptoticRow row;
    row.radius = r;
    row.increment = variance_functional(s, tau, dist, q, p);
    row.far_ratio = row.increment / tau.value(r);
    row.near_ratio = row.increment / r;
    row.near_bound = bound;
    rows.push_back(row);
  }
  return rows;
}

enum class Uniqueness { UniqueByMassNearMean, UniqueByNoBalancedSegment, UniqueByConvexSupport, Inconclusive };

inline std::string to_string(Uniqueness u) {
  switch (u) {
    case Uniqueness::UniqueByMassNearMean: return "UniqueByMassNearMean";
    case Uniqueness::UniqueByNoBalancedSegment: return "UniqueByNoBalancedSegment";
    case Uniqueness::UniqueByConvexSupport: return "UniqueByConvexSupport";
    case Uniqueness::Inconclusive: return "Inconclusive";
  }
  return "Inconclusive";
}

namespace detail {

/// Whether sorted (position, weight) pairs leave a gap of positive length with mass 1/2 on each side.
inline bool has_balanced_gap(std::vector<std::pair<double, double>> pos, double scale) {
  std::sort(pos.begin(), pos.end());
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < pos.size(); ++i) {
    acc += pos[i].second;
    if (pos[i + 1].first - pos[i].first > 1e-12 * scale && std::abs(acc - 0.5) <= 1e-12) return true;
  }
  return false;
}

/// A positive-length segment inside one component with Y split 1/2 : 1/2 onto its two sides and no
/// mass in between; any non-degenerate median set contains one.
inline bool balanced_segment_exists(const Space& s, const DiscreteDistribution& dist) {
  for (int c = 0; c < s.component_count(); ++c) {
    const auto an = anchors_in(s, dist, c);
    if (s.is_tree_component(c)) {
      const MetricTree& tr = s.tree_component(c);
      for (int e = 0; e < tr.edge_count(); ++e) {
        const auto& ed = tr.edge(e);
        std::vector<std::pair<double, double>> pos;
        for (const auto& a : an) {
          const TreePoint& ap = a.local.tree_point();
          double x;
          if (ap.edge == e) x = ap.offset;
          else x = tr.to_vertex(ap, ed.u) < tr.to_vertex(ap, ed.v) ? 0.0 : ed.length;
          pos.emplace_back(x, a.weight);
        }
        if (has_balanced_gap(pos, 1.0 + ed.length)) return true;
      }
      continue;
    }
    const Vec& base = an.front().local.coords();
    double span = 0.0;
    std::size_t far = 0;
    for (std::size_t i = 0; i < an.size(); ++i) {
      const double r = (an[i].local.coords() - base).norm();
      if (r > span) {
        span = r;
        far = i;
      }
    }
    if (span <= 1e-12 * (1.0 + base.norm())) continue;
    const Vec u = (an[far].local.coords() - base) / span;
    std::vector<std::pair<double, double>> pos;
    bool collinear = true;
    for (const auto& a : an) {
      const Vec d = a.local.coords() - base;
      if ((d - d.dot(u) * u).norm() > 1e-10 * (1.0 + span)) collinear = false;
      pos.emplace_back(d.dot(u), a.weight);
    }
    if (collinear && has_balanced_gap(pos, 1.0 + span)) return true;
  }
  return false;
}

}  // namespace detail

/// Checks, in order: mass within x0 of m; single-point (convex) support; absence of a balanced
/// segment, which rules out a non-degenerate median set and hence, for m in B0, a non-degenerate mean set.
inline Uniqueness uniqueness_certificate(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                                         const Point& m) {
  const double x0 = tau.x0();
  if (!(x0 < kInf) || dist.mass_within(s, m, x0) > 0.0) return Uniqueness::UniqueByMassNearMean;
  bool single = true;
  for (const auto& a : dist.atoms()) single = single && s.distance(a.point, dist.atoms().front().point) <= kPointTol;
  if (single) return Uniqueness::UniqueByConvexSupport;
  if (!detail::balanced_segment_exists(s, dist)) return Uniqueness::UniqueByNoBalancedSegment;
  return Uniqueness::Inconclusive;
}

/// E[tau(|Y - q|) - tau(|Y|)] for Y = +-z with probability 1/2 each and tau = Huber(delta).
inline double huber_reference_functional(double z, double delta, double q) {
  if (!(z > 0.0) || !(delta > 0.0)) throw std::invalid_argument("huber_reference_functional needs z, delta > 0");
  const double a = std::abs(q);
  const double e = delta - z;
  if (z <= delta) {
    if (a <= e) return 0.5 * q * q;
    if (a <= delta + z) return 0.25 * q * q + 0.5 * e * a - 0.25 * e * e;
    return delta * a - 0.5 * (delta * delta + z * z);
  }
  if (a <= -e) return 0.0;
  if (a <= delta + z) return 0.25 * q * q + 0.5 * e * a + 0.25 * e * e;
  return delta * (a - z);
}

struct GrowthProbe {
  double near_exponent = 0.0;
  double far_ratio_min = kInf;  // empirical lower band
  double far_ratio_max = 0.0;   // empirical upper band
  bool near_ok = false;
  bool far_ok = true;
};

/// Least-squares slope of log(value) against log(radius).
inline double loglog_slope(const std::vector<double>& radii, const std::vector<double>& values) {
  if (radii.size() < 2 || radii.size() != values.size()) throw std::invalid_argument("log-log fit needs >= 2 points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || !(values[i] > 0.0)) throw std::invalid_argument("log-log fit needs positive data");
    const double x = std::log(radii[i]), y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (!(den > 0.0)) throw std::invalid_argument("log-log fit: degenerate radius grid");
  return (n * sxy - sx * sy) / den;
}

/// increment(r) = F(q_r) - F(m) for a probe at distance r. Diagnostic only: the constants behind
/// the growth regimes are existential, the 0.1 exponent slack is an engineering choice.
inline GrowthProbe growth_regime_probe(const std::function<double(double)>& increment, const Transform& tau,
                                       double beta, const std::vector<double>& near_radii,
                                       const std::vector<double>& far_radii) {
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("growth_regime_probe: beta must lie in [0, 1)");
  GrowthProbe g;
  std::vector<double> vals;
  for (double r : near_radii) vals.push_back(increment(r));
  g.near_exponent = loglog_slope(near_radii, vals);
  g.near_ok = g.near_exponent <= 2.0 - beta + 0.1;
  for (double r : far_radii) {
    const double ratio = increment(r) / tau.value(r);
    g.far_ratio_min = std::min(g.far_ratio_min, ratio);
    g.far_ratio_max = std::max(g.far_ratio_max, ratio);
  }
  if (!far_radii.empty()) g.far_ok = g.far_ratio_min > 0.0 && std::isfinite(g.far_ratio_max);
  return g;
}

/// Probes along m + r * direction in a Euclidean component.
inline GrowthProbe growth_regime_probe(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                                       const Point& m, double beta, const std::vector<double>& near_radii,
                                       const std::vector<double>& far_radii,
                                       std::optional<Vec> direction = std::nullopt) {
  if (!m.is_vector() || !std::holds_alternative<EuclideanSpace>(s.component(m.component)))
    throw std::invalid_argument("growth_regime_probe needs m in a Euclidean component");
  Vec dir = direction.value_or(Vec::Unit(m.coords().size(), 0));
  dir.normalize();
  auto inc = [&](double r) {
    return variance_functional(s, tau, dist, Point::vec(Vec(m.coords() + r * dir), m.component), m);
  };
  return growth_regime_probe(inc, tau, beta, near_radii, far_radii);
}

}  // namespace tfm
