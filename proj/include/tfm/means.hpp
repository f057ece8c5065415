#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tfm/spaces.hpp"
#include "tfm/transforms.hpp"

namespace tfm {

struct Atom {
  Point point;
  double weight = 0.0;
};

/// Finite weighted atom list; weights positive and summing to 1 within 1e-12.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  explicit DiscreteDistribution(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw std::invalid_argument("distribution needs at least one atom");
    double s = 0.0;
    for (const auto& a : atoms_) {
      if (!(a.weight > 0.0) || !std::isfinite(a.weight)) throw std::invalid_argument("atom weights must be positive");
      s += a.weight;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("atom weights must sum to 1");
  }

  static DiscreteDistribution normalized(std::vector<Atom> atoms) {
    double s = 0.0;
    for (const auto& a : atoms) s += a.weight;
    if (!(s > 0.0)) throw std::invalid_argument("total weight must be positive");
    for (auto& a : atoms) a.weight /= s;
    return DiscreteDistribution(std::move(atoms));
  }
  static DiscreteDistribution point_mass(Point p) { return DiscreteDistribution({Atom{std::move(p), 1.0}}); }

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }

  /// (1 - w0) * this + w0 * delta_p
  DiscreteDistribution mixed_with(const Point& p, double w0) const {
    if (!(w0 > 0.0 && w0 < 1.0)) throw std::invalid_argument("mixture weight must lie in (0, 1)");
    std::vector<Atom> out;
    for (const auto& a : atoms_) out.push_back(Atom{a.point, (1.0 - w0) * a.weight});
    out.push_back(Atom{p, w0});
    return DiscreteDistribution::normalized(std::move(out));
  }

  DiscreteDistribution checked_in(const Space& s) const {
    std::vector<Atom> out;
    for (const auto& a : atoms_) out.push_back(Atom{s.checked(a.point), a.weight});
    return DiscreteDistribution(std::move(out));
  }

  double mass_within(const Space& s, const Point& p, double radius, bool strict = true) const {
    double m = 0.0;
    for (const auto& a : atoms_) {
      const double d = s.distance(a.point, p);
      if (strict ? d < radius : d <= radius) m += a.weight;
    }
    return m;
  }

 private:
  std::vector<Atom> atoms_;
};

/// E[tau(d(Y, q))]
inline double expected_tau(const Space& s, const Transform& tau, const DiscreteDistribution& dist, const Point& q) {
  double v = 0.0;
  for (const auto& a : dist.atoms()) v += a.weight * tau.value(s.distance(a.point, q));
  return v;
}

/// F(q) = E[tau(d(Y,q)) - tau(d(Y,o))], summed atom by atom.
inline double variance_functional(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                                  const Point& q, const Point& o) {
  const Point qq = s.checked(q), oo = s.checked(o);
  double v = 0.0;
  for (const auto& a : dist.atoms())
    v += a.weight * (tau.value(s.distance(a.point, qq)) - tau.value(s.distance(a.point, oo)));
  return v;
}

/// D(q, p) = E|tau(d(Y,q)) - tau(d(Y,p))|
inline double pseudo_distance(const Space& s, const Transform& tau, const DiscreteDistribution& dist,
                              const Point& q, const Point& p) {
  double v = 0.0;
  for (const auto& a : dist.atoms())
    v += a.weight * std::abs(tau.value(s.distance(a.point, q)) - tau.value(s.distance(a.point, p)));
  return v;
}

// ---------------------------------------------------------------------------
// Sampling

/// Generator keyed by (seed, draw index), so any shard of draws reproduces independently.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
  }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() {
    // Box-Muller, explicit so that streams are identical across standard libraries
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

struct Sampler {
  enum class Kind { UniformSegment, UniformDisk, UniformSphere, AtomMixture };
  Kind kind = Kind::AtomMixture;
  Geodesic segment;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 1.0;
  int dim = 1;
  int component = 0;
  DiscreteDistribution mixture;
  std::uint64_t seed = 0;

  static Sampler uniform_segment(Geodesic g, std::uint64_t seed) {
    Sampler s;
    s.kind = Kind::UniformSegment;
    s.segment = std::move(g);
    s.seed = seed;
    return s;
  }
  static Sampler uniform_disk(Eigen::Vector2d center, double radius, std::uint64_t seed, int component = 0) {
    Sampler s;
    s.kind = Kind::UniformDisk;
    s.center = center;
    s.radius = radius;
    s.seed = seed;
    s.component = component;
    return s;
  }
  /// Uniform on the sphere of the given radius around the origin of R^k.
  static Sampler uniform_sphere(int k, double radius, std::uint64_t seed, int component = 0) {
    Sampler s;
    s.kind = Kind::UniformSphere;
    s.dim = k;
    s.radius = radius;
    s.seed = seed;
    s.component = component;
    return s;
  }
  static Sampler atom_mixture(DiscreteDistribution d, std::uint64_t seed) {
    Sampler s;
    s.kind = Kind::AtomMixture;
    s.mixture = std::move(d);
    s.seed = seed;
    return s;
  }

  std::string kind_name() const {
    switch (kind) {
      case Kind::UniformSegment: return "uniform_segment";
      case Kind::UniformDisk: return "uniform_disk";
      case Kind::UniformSphere: return "uniform_sphere";
      case Kind::AtomMixture: return "atom_mixture";
    }
    return "unknown";
  }

  Point draw(std::uint64_t index) const {
    CounterRng rng(seed, index);
    switch (kind) {
      case Kind::UniformSegment: return segment.eval(rng.uniform() * segment.length());
      case Kind::UniformDisk: {
        const double r = radius * std::sqrt(rng.uniform());
        const double phi = 2.0 * std::numbers::pi * rng.uniform();
        return Point::vec(Vec(center + r * Eigen::Vector2d(std::cos(phi), std::sin(phi))), component);
      }
      case Kind::UniformSphere: {
        Vec g(dim);
        for (int i = 0; i < dim; ++i) g[i] = rng.normal();
        return Point::vec(Vec(radius * g / g.norm()), component);
      }
      case Kind::AtomMixture: {
        const double u = rng.uniform();
        double acc = 0.0;
        for (const auto& a : mixture.atoms()) {
          acc += a.weight;
          if (u < acc) return a.point;
        }
        return mixture.atoms().back().point;
      }
    }
    throw std::logic_error("unknown sampler kind");
  }
};

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Sample mean and standard error of tau(d(Y,q)) - tau(d(Y,o)) over draws 0..n-1.
inline McEstimate variance_functional_mc(const Space& s, const Transform& tau, const Sampler& sampler,
                                         const Point& q, const Point& o, std::int64_t n) {
  if (n < 2) throw std::invalid_argument("variance_functional_mc needs n >= 2");
  double mean = 0.0, m2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const Point y = sampler.draw(static_cast<std::uint64_t>(i));
    const double x = tau.value(s.distance(y, q)) - tau.value(s.distance(y, o));
    const double delta = x - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (x - mean);
  }
  const double var = m2 / static_cast<double>(n - 1);
  return McEstimate{mean, std::sqrt(var / static_cast<double>(n))};
}

/// Uniform law on the geodesic from a to b as 64-node Gauss-Legendre atoms on each piece between
/// consecutive arc-length cuts; integrands smooth on every piece are then integrated to rounding.
inline DiscreteDistribution gauss_legendre_segment(const Space& s, const Point& a, const Point& b,
                                                  std::vector<double> cuts = {}) {
  using GL = boost::math::quadrature::gauss<double, 64>;
  const Geodesic g = s.geodesic(a, b);
  const double L = g.length();
  if (!(L > 0.0)) throw std::invalid_argument("gauss_legendre_segment needs a != b");
  cuts.push_back(0.0);
  cuts.push_back(L);
  for (double& c : cuts) c = std::clamp(c, 0.0, L);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<Atom> atoms;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double lo = cuts[k], half = 0.5 * (cuts[k + 1] - lo), mid = lo + half;
    // even order: the tables hold the positive half of the symmetric rule
    for (std::size_t i = 0; i < GL::abscissa().size(); ++i)
      for (double sign : {-1.0, 1.0})
        atoms.push_back(Atom{g.eval(mid + sign * half * GL::abscissa()[i]), GL::weights()[i] * half / L});
  }
  return DiscreteDistribution::normalized(std::move(atoms));
}

// ---------------------------------------------------------------------------
// Solvers

struct MeanResult {
  Point minimizer;
  double objective = 0.0;  // E[tau(d(Y, minimizer))]
  int iterations = 0;
  double certified_gap = 0.0;
  std::string method;
};

/// Geodesic segment [a, b], possibly degenerate.
struct Segment {
  Point a;
  Point b;
  double length = 0.0;
};

namespace detail {

struct LineTerm {
  double weight;
  double extra;  // distance already accumulated before the pivot
  double pivot;
};

/// s -> sum w tau(extra + |s - pivot|) on [lo, hi]; convex.
struct LineObjective {
  const Transform* tau = nullptr;
  std::vector<LineTerm> terms;
  double lo = 0.0;
  double hi = 0.0;

  double value(double s) const {
    double v = 0.0;
    for (const auto& t : terms) v += t.weight * tau->value(t.extra + std::abs(s - t.pivot));
    return v;
  }
  double dright(double s) const {
    double v = 0.0;
    for (const auto& t : terms) v += t.weight * tau->first(t.extra + std::abs(s - t.pivot)) * (s >= t.pivot ? 1.0 : -1.0);
    return v;
  }
  double dleft(double s) const {
    double v = 0.0;
    for (const auto& t : terms) v += t.weight * tau->first(t.extra + std::abs(s - t.pivot)) * (s > t.pivot ? 1.0 : -1.0);
    return v;
  }
  double slope_scale() const {
    double v = 0.0;
    for (const auto& t : terms) v += t.weight * tau->first(t.extra + (hi - lo));
    return v + 1e-300;
  }

  struct Interval {
    double lo, hi, at, value, gap;
  };

  /// Nondifferentiable points of the objective (pivots and transformed kinks) inside [lo, hi].
  std::vector<double> kinks() const {
    std::vector<double> k{lo, hi};
    const auto tk = tau->kinks();
    for (const auto& t : terms) {
      k.push_back(t.pivot);
      for (double x : tk)
        if (x > t.extra) {
          k.push_back(t.pivot - (x - t.extra));
          k.push_back(t.pivot + (x - t.extra));
        }
    }
    return k;
  }

  /// Moves s onto the nearest kink within 1e-8 (1 + hi - lo) that passes `keep`; set endpoints of
  /// piecewise-affine objectives sit on kinks, smooth minimizers near a pivot must not move.
  template <class Keep>
  double snap(double s, Keep&& keep) const {
    const double tol = 1e-8 * (1.0 + hi - lo);
    double best = s, bd = tol;
    for (double k : kinks())
      if (k >= lo && k <= hi && std::abs(k - s) <= bd && keep(k)) {
        bd = std::abs(k - s);
        best = k;
      }
    return best;
  }

  /// {s : dright(s) >= -tol and dleft(s) <= tol}; at = midpoint.
  Interval argmin(double tol) const {
    double a = lo, b = hi;
    double left_end;
    if (dright(lo) >= -tol) {
      left_end = lo;
    } else {
      for (int i = 0; i < 300; ++i) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        if (dright(m) >= -tol) b = m;
        else a = m;
      }
      left_end = b;
    }
    double right_end;
    a = lo;
    b = hi;
    if (dleft(hi) <= tol) {
      right_end = hi;
    } else {
      for (int i = 0; i < 300; ++i) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        if (dleft(m) <= tol) a = m;
        else b = m;
      }
      right_end = a;
    }
    const double loose = std::max(tol, 1e-10 * slope_scale());
    auto in_set = [&](double k) { return (k >= hi || dright(k) >= -loose) && (k <= lo || dleft(k) <= loose); };
    left_end = snap(left_end, in_set);
    right_end = snap(right_end, in_set);
    if (right_end - left_end <= 1e-8 * (1.0 + hi - lo)) right_end = left_end = 0.5 * (left_end + right_end);
    const double at = 0.5 * (left_end + right_end);
    const double v = value(at);
    return Interval{left_end, right_end, at, v, std::max(0.0, v - lower_bound(at))};
  }

  /// Convexity lower bound on min over [lo, hi] from tangents at xl = at - d and xr = at + d.
  /// Tangents just beside `at` stay tight when the slope jumps within an ulp of a pivot.
  double lower_bound(double at) const {
    const double d = 1e-13 * (1.0 + hi - lo);
    const double xl = std::max(lo, at - d), xr = std::min(hi, at + d);
    const double fl = value(xl), fr = value(xr);
    double lb = std::min(fl, fr);
    if (xl > lo) lb = std::min(lb, fl - std::max(0.0, dleft(xl)) * (xl - lo));
    if (xr < hi) lb = std::min(lb, fr + std::min(0.0, dright(xr)) * (hi - xr));
    if (xr > xl) lb = std::min(lb, fl + std::min(0.0, dright(xl)) * (xr - xl));
    return lb;
  }

  /// Largest interval around `at` (a minimizer) where value <= level.
  std::pair<double, double> sublevel(double at, double level) const {
    auto search = [&](double inside, double outside) {
      if (value(outside) <= level) return outside;
      for (int i = 0; i < 300; ++i) {
        const double m = 0.5 * (inside + outside);
        if (m == inside || m == outside) break;
        if (value(m) <= level) inside = m;
        else outside = m;
      }
      return inside;
    };
    auto below = [&](double k) { return value(k) <= level; };
    double a = snap(search(at, lo), below), b = snap(search(at, hi), below);
    if (b - a <= 1e-8 * (1.0 + hi - lo)) a = b = at;
    return {a, b};
  }
};

struct Anchor {
  Point local;
  double extra;
  double weight;
};

inline std::vector<Anchor> anchors_in(const Space& s, const DiscreteDistribution& dist, int c) {
  std::vector<Anchor> out;
  for (const auto& a : dist.atoms()) {
    const Point loc = s.anchor_in(c, a.point);
    out.push_back(Anchor{loc, a.point.component == c ? 0.0 : s.distance(loc, a.point), a.weight});
  }
  return out;
}

/// A candidate argmin piece inside one component.
struct Piece {
  Point a, b;        // set endpoints (equal for a point)
  Point best;        // minimizer inside the piece
  double value;      // objective at best
  double gap;        // certified suboptimality of best within the component
  int iterations;
  std::string method;
  // line pieces keep their objective so that a sublevel set can be recomputed
  bool is_line = false;
  LineObjective line;
  Vec origin, dir;   // vector line: origin + s dir
  int edge = -1;     // tree line
};

inline Point line_point(const Piece& p, int component, double s) {
  if (p.edge >= 0) return Point::tree(p.edge, s, component);
  return Point::vec(Vec(p.origin + s * p.dir), component);
}

inline std::vector<Piece> tree_pieces(const Space& s, const Transform& tau, const DiscreteDistribution& dist, int c,
                                      double rel_tol) {
  const MetricTree& tr = s.tree_component(c);
  const auto anchors = anchors_in(s, dist, c);
  std::vector<Piece> out;
  for (int e = 0; e < tr.edge_count(); ++e) {
    const auto& ed = tr.edge(e);
    LineObjective obj;
    obj.tau = &tau;
    obj.lo = 0.0;
    obj.hi = ed.length;
    for (const auto& an : anchors) {
      const TreePoint& ap = an.local.tree_point();
      if (ap.edge == e) {
        obj.terms.push_back({an.weight, an.extra, ap.offset});
        continue;
      }
      const double du = tr.to_vertex(ap, ed.u), dv = tr.to_vertex(ap, ed.v);
      if (du < dv) obj.terms.push_back({an.weight, an.extra + du, 0.0});
      else obj.terms.push_back({an.weight, an.extra + dv, ed.length});
    }
    const auto iv = obj.argmin(rel_tol * obj.slope_scale());
    Piece p;
    p.is_line = true;
    p.line = obj;
    p.edge = e;
    p.a = Point::tree(e, iv.lo, c);
    p.b = Point::tree(e, iv.hi, c);
    p.best = Point::tree(e, iv.at, c);
    p.value = iv.value;
    p.gap = iv.gap;
    p.iterations = 1;
    p.method = "edge_bisection";
    out.push_back(std::move(p));
  }
  return out;
}

struct VectorEval {
  double value;
  Vec grad;
  Eigen::MatrixXd hess;
};

inline VectorEval vector_eval(const Transform& tau, const std::vector<Anchor>& an, const Vec& x, bool with_hess) {
  const Eigen::Index k = x.size();
  VectorEval ev{0.0, Vec::Zero(k), with_hess ? Eigen::MatrixXd::Zero(k, k) : Eigen::MatrixXd()};
  for (const auto& a : an) {
    const Vec diff = x - a.local.coords();
    const double r = diff.norm();
    const double arg = a.extra + r;
    ev.value += a.weight * tau.value(arg);
    if (r <= 1e-300) continue;
    const Vec u = diff / r;
    const auto d = tau.derivs(arg);
    ev.grad += a.weight * d.first * u;
    if (with_hess) {
      const double t2 = 0.5 * (d.second_right + d.second_left);
      const Eigen::MatrixXd uu = u * u.transpose();
      ev.hess += a.weight * (t2 * uu + (d.first / r) * (Eigen::MatrixXd::Identity(k, k) - uu));
    }
  }
  return ev;
}

inline double vector_gap(const std::vector<Anchor>& an, const Vec& x, const Vec& grad) {
  double reach = 0.0;
  for (const auto& a : an) reach = std::max(reach, (x - a.local.coords()).norm());
  return grad.norm() * reach;
}

/// f(x) - min f over the anchors' hull. Anchors within rounding of x keep their exact term
/// w tau(e + max(0, t - r)) with t = |y - x|; the rest are linearized. The bound
/// phi(t) = |g_far| t - sum_near w (tau(e + max(0, t - r)) - tau(e + r)) is concave in t, and a
/// bracket [lo, hi] of its maximizer gives max phi <= phi(lo) + phi'(lo) (hi - lo).
inline double vector_gap_split(const Transform& tau, const std::vector<Anchor>& an, const Vec& x) {
  double reach = 0.0, scale = 1.0 + x.norm();
  for (const auto& a : an) reach = std::max(reach, (x - a.local.coords()).norm());
  Vec g_far = Vec::Zero(x.size());
  std::vector<const Anchor*> near;
  std::vector<double> near_r;
  for (const auto& a : an) {
    const Vec diff = x - a.local.coords();
    const double r = diff.norm();
    if (r <= 1e-8 * scale) {
      near.push_back(&a);
      near_r.push_back(r);
    } else {
      g_far += a.weight * tau.first(a.extra + r) * diff / r;
    }
  }
  const double G = g_far.norm();
  if (near.empty()) return G * reach;
  auto phi = [&](double t) {
    double v = G * t;
    for (std::size_t j = 0; j < near.size(); ++j)
      v -= near[j]->weight * (tau.value(near[j]->extra + std::max(0.0, t - near_r[j])) - tau.value(near[j]->extra + near_r[j]));
    return v;
  };
  auto dphi = [&](double t) {  // right derivative
    double v = G;
    for (std::size_t j = 0; j < near.size(); ++j)
      if (t >= near_r[j]) v -= near[j]->weight * tau.first(near[j]->extra + t - near_r[j]);
    return v;
  };
  if (dphi(reach) >= 0.0) return std::max(0.0, phi(reach));
  double lo = 0.0, hi = reach;
  for (int i = 0; i < 400 && hi - lo > 1e-15 * hi; ++i) {
    const double m = lo > 0.0 ? std::sqrt(lo * hi) : (hi > 1e-300 ? hi * 1e-20 : 0.5 * hi);
    (dphi(m) >= 0.0 ? lo : hi) = m;
  }
  return std::max(0.0, phi(lo) + std::max(0.0, dphi(lo)) * (hi - lo));
}

/// Minimizer of the restricted objective over a vector component whose anchors are not collinear.
inline Piece vector_newton(const Space& s, const Transform& tau, const std::vector<Anchor>& an, int c) {
  const int k = s.vector_dim(c);
  const double scale_x = [&] {
    double m = 0.0;
    for (const auto& a : an) m = std::max(m, a.local.coords().norm());
    return 1.0 + m;
  }();

  // Kinked anchors: optimal iff the pull of the others fits in the subdifferential.
  for (std::size_t j = 0; j < an.size(); ++j) {
    const Vec& aj = an[j].local.coords();
    double kink = 0.0;
    Vec g = Vec::Zero(k);
    for (const auto& a : an) {
      const Vec diff = aj - a.local.coords();
      const double r = diff.norm();
      if (r <= 1e-14 * scale_x) {
        kink += a.weight * tau.first(a.extra);
        continue;
      }
      g += a.weight * tau.first(a.extra + r) * diff / r;
    }
    if (kink > 0.0 && g.norm() <= kink) {
      Piece p;
      p.a = p.b = p.best = Point::vec(aj, c);
      p.value = vector_eval(tau, an, aj, false).value;
      p.gap = 0.0;
      p.iterations = 0;
      p.method = "anchor_subgradient";
      return p;
    }
  }

  double wsum = 0.0;
  Vec x = Vec::Zero(k);
  for (const auto& a : an) {
    x += a.weight * a.local.coords();
    wsum += a.weight;
  }
  x /= wsum;
  // Newton stalls when an iterate lands on a non-optimal kinked anchor (the Hessian blows up there).
  // Leave along the pull of the other anchors, minimizing exactly on that ray.
  auto escape = [&](const Vec& at) -> std::optional<Vec> {
    for (const auto& aj : an) {
      const Vec& p = aj.local.coords();
      if ((at - p).norm() > 1e-9 * scale_x || tau.first(aj.extra) <= 0.0) continue;
      Vec pull = Vec::Zero(k);
      for (const auto& a : an) {
        const Vec diff = p - a.local.coords();
        const double r = diff.norm();
        if (r > 1e-14 * scale_x) pull += a.weight * tau.first(a.extra + r) * diff / r;
      }
      if (pull.norm() <= 0.0) return std::nullopt;
      const Vec dir = -pull / pull.norm();
      auto slope = [&](double t) { return vector_eval(tau, an, Vec(p + t * dir), false).grad.dot(dir); };
      double lo_t = 0.0, hi_t = 2.0 * scale_x;
      while (slope(hi_t) < 0.0 && hi_t < 1e12) hi_t *= 2.0;
      for (int i = 0; i < 200 && hi_t - lo_t > 1e-16 * scale_x; ++i) {
        const double m = 0.5 * (lo_t + hi_t);
        (slope(m) < 0.0 ? lo_t : hi_t) = m;
      }
      return Vec(p + 0.5 * (lo_t + hi_t) * dir);
    }
    return std::nullopt;
  };

  int it = 0, escapes = 0;
  VectorEval ev = vector_eval(tau, an, x, true);
  for (; it < 300; ++it) {
    const double gap = vector_gap(an, x, ev.grad);
    if (gap <= 1e-15 * (1.0 + std::abs(ev.value))) break;
    if (escapes < 8) {
      if (auto out = escape(x)) {
        const VectorEval cand = vector_eval(tau, an, *out, true);
        if (cand.value <= ev.value) {
          x = *out;
          ev = cand;
          ++escapes;
          continue;
        }
      }
    }
    const double tr = std::max(ev.hess.trace(), 1e-300);
    double mu = 1e-14 * tr;
    Vec step;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.hess + mu * Eigen::MatrixXd::Identity(k, k));
      step = ldlt.solve(-ev.grad);
      if (ldlt.info() == Eigen::Success && step.allFinite() && step.dot(ev.grad) < 0.0) break;
      mu = std::max(mu * 100.0, 1e-10 * tr);
    }
    if (!step.allFinite() || !(step.dot(ev.grad) < 0.0)) step = -ev.grad / std::max(tr, 1e-300);
    // Once the predicted decrease is below rounding of the objective, Armijo tests only see noise;
    // the full step is then judged by the gradient.
    if (-ev.grad.dot(step) <= 1e-13 * (1.0 + std::abs(ev.value))) {
      const Vec cand = x + step;
      VectorEval next = vector_eval(tau, an, cand, true);
      if (!(next.value <= ev.value + 1e-14 * (1.0 + std::abs(ev.value)) &&
            vector_gap(an, cand, next.grad) < 0.5 * vector_gap(an, x, ev.grad)))
        break;
      x = cand;
      ev = next;
      continue;
    }
    double t = 1.0;
    bool moved = false;
    VectorEval next;
    for (int ls = 0; ls < 60; ++ls) {
      const Vec cand = x + t * step;
      next = vector_eval(tau, an, cand, true);
      if (next.value <= ev.value + 1e-4 * t * ev.grad.dot(step)) {
        x = cand;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
    ev = next;
  }
  Piece p;
  p.a = p.b = p.best = Point::vec(x, c);
  p.value = ev.value;
  p.gap = std::min(vector_gap(an, x, ev.grad), vector_gap_split(tau, an, x));
  p.iterations = it;
  p.method = "damped_newton";
  return p;
}

/// Nested golden-section over the disk in Cartesian coordinates; fallback only.
inline Piece disk_nested_golden(const Transform& tau, const std::vector<Anchor>& an, const DiskSpace& d, int c) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto golden = [&](double a, double b, auto&& f) {
    double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > 1e-12 * (1.0 + d.radius)) {
      if (f1 <= f2) {
        b = x2; x2 = x1; f2 = f1; x1 = b - invphi * (b - a); f1 = f(x1);
      } else {
        a = x1; x1 = x2; f1 = f2; x2 = a + invphi * (b - a); f2 = f(x2);
      }
    }
    return 0.5 * (a + b);
  };
  auto inner = [&](double x) {
    const double half = std::sqrt(std::max(0.0, d.radius * d.radius - (x - d.center.x()) * (x - d.center.x())));
    const double y = golden(d.center.y() - half, d.center.y() + half, [&](double yy) {
      return vector_eval(tau, an, Eigen::Vector2d(x, yy), false).value;
    });
    return y;
  };
  const double x = golden(d.center.x() - d.radius, d.center.x() + d.radius, [&](double xx) {
    return vector_eval(tau, an, Eigen::Vector2d(xx, inner(xx)), false).value;
  });
  const Vec best = Eigen::Vector2d(x, inner(x));
  const auto ev = vector_eval(tau, an, best, false);
  Piece p;
  p.a = p.b = p.best = Point::vec(best, c);
  p.value = ev.value;
  // one-sided bound from the subgradient at the returned point
  p.gap = std::min(vector_gap(an, best, vector_eval(tau, an, best, true).grad), vector_gap_split(tau, an, best));
  p.iterations = 0;
  p.method = "nested_golden";
  return p;
}

inline std::vector<Piece> vector_pieces(const Space& s, const Transform& tau, const DiscreteDistribution& dist, int c,
                                        double rel_tol) {
  const auto an = anchors_in(s, dist, c);
  const Vec& base = an.front().local.coords();
  double span = 0.0, basenorm = base.norm();
  std::size_t far = 0;
  for (std::size_t i = 0; i < an.size(); ++i) {
    const double r = (an[i].local.coords() - base).norm();
    if (r > span) {
      span = r;
      far = i;
    }
  }
  Piece p;
  if (span <= 1e-12 * (1.0 + basenorm)) {
    p.a = p.b = p.best = Point::vec(base, c);
    p.value = vector_eval(tau, an, base, false).value;
    p.gap = 0.0;
    p.iterations = 0;
    p.method = "single_anchor";
    return {p};
  }
  const Vec u = (an[far].local.coords() - base) / span;
  double resid = 0.0;
  for (const auto& a : an) {
    const Vec d = a.local.coords() - base;
    resid = std::max(resid, (d - d.dot(u) * u).norm());
  }
  if (resid <= 1e-10 * (1.0 + span)) {
    LineObjective obj;
    obj.tau = &tau;
    obj.lo = kInf;
    obj.hi = -kInf;
    for (const auto& a : an) {
      const double piv = (a.local.coords() - base).dot(u);
      obj.terms.push_back({a.weight, a.extra, piv});
      obj.lo = std::min(obj.lo, piv);
      obj.hi = std::max(obj.hi, piv);
    }
    const auto iv = obj.argmin(rel_tol * obj.slope_scale());
    p.is_line = true;
    p.line = obj;
    p.origin = base;
    p.dir = u;
    p.a = line_point(p, c, iv.lo);
    p.b = line_point(p, c, iv.hi);
    p.best = line_point(p, c, iv.at);
    p.value = iv.value;
    p.gap = iv.gap;
    p.iterations = 1;
    p.method = "collinear_bisection";
    return {p};
  }
  p = vector_newton(s, tau, an, c);
  if (const auto* d = std::get_if<DiskSpace>(&s.component(c))) {
    Vec x = p.best.coords();
    const Vec off = x - d->center;
    if (off.norm() > d->radius) x = d->center + off * (d->radius / off.norm());
    p.a = p.b = p.best = Point::vec(x, c);
    if (p.gap > 1e-9 * (1.0 + std::abs(p.value))) {
      Piece g = disk_nested_golden(tau, an, *d, c);
      if (g.value < p.value) p = g;
    }
  }
  return {p};
}

struct Solution {
  std::vector<Piece> pieces;
  std::vector<int> piece_component;
  double best_value = kInf;
  std::size_t best = 0;
  double lower_bound = kInf;
  int iterations = 0;
};

inline Solution solve(const Space& s, const Transform& tau, const DiscreteDistribution& dist, double rel_tol) {
  Solution sol;
  for (int c = 0; c < s.component_count(); ++c) {
    auto ps = s.is_tree_component(c) ? tree_pieces(s, tau, dist, c, rel_tol) : vector_pieces(s, tau, dist, c, rel_tol);
    for (auto& p : ps) {
      sol.iterations += p.iterations;
      sol.lower_bound = std::min(sol.lower_bound, p.value - p.gap);
      if (p.value < sol.best_value) {
        sol.best_value = p.value;
        sol.best = sol.pieces.size();
      }
      sol.pieces.push_back(std::move(p));
      sol.piece_component.push_back(c);
    }
  }
  return sol;
}

/// Farthest pair of candidate points, with collinearity certification.
inline Segment span_segment(const Space& s, const std::vector<Point>& cands) {
  std::size_t ia = 0, ib = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < cands.size(); ++i)
    for (std::size_t j = i; j < cands.size(); ++j) {
      const double d = s.distance(cands[i], cands[j]);
      if (d > best) {
        best = d;
        ia = i;
        ib = j;
      }
    }
  Segment seg{cands[ia], cands[ib], best};
  if (best <= 1e-8) {
    const Point mid = s.geodesic(seg.a, seg.b).eval(0.5 * best);
    return Segment{mid, mid, 0.0};
  }
  for (const auto& x : cands) {
    const double excess = s.distance(seg.a, x) + s.distance(x, seg.b) - seg.length;
    if (excess > 1e-9 * (1.0 + seg.length)) throw std::runtime_error("argmin set is not a geodesic segment");
  }
  return seg;
}

}  // namespace detail

enum class SetRule { Derivative, Sublevel };

/// Full argmin set of q -> E[tau(d(Y,q))] as a segment.
/// Derivative: one-sided slopes within 1e-12 of zero (relative). Sublevel: values within 1e-13 (1 + |min|), a
/// few hundred roundings of the atom sum; a looser level would widen strict minima at atoms past the kink snap.
inline Segment argmin_set(const Space& s, const Transform& tau, const DiscreteDistribution& dist, SetRule rule) {
  const auto d = dist.checked_in(s);
  const auto sol = detail::solve(s, tau, d, 1e-12);
  const double fmin = sol.best_value;
  std::vector<Point> cands;
  for (std::size_t i = 0; i < sol.pieces.size(); ++i) {
    const auto& p = sol.pieces[i];
    const int c = sol.piece_component[i];
    if (rule == SetRule::Derivative) {
      if (p.value > fmin + 1e-12 * (1.0 + std::abs(fmin))) continue;
      cands.push_back(p.a);
      cands.push_back(p.b);
    } else {
      const double level = fmin + 1e-13 * (1.0 + std::abs(fmin));
      if (p.value > level) continue;
      if (p.is_line) {
        const double at = p.edge >= 0 ? p.best.tree_point().offset : (p.best.coords() - p.origin).dot(p.dir);
        const auto [lo, hi] = p.line.sublevel(at, level);
        cands.push_back(detail::line_point(p, c, lo));
        cands.push_back(detail::line_point(p, c, hi));
      } else {
        cands.push_back(p.best);
      }
    }
  }
  return detail::span_segment(s, cands);
}

inline Segment median_set(const Space& s, const DiscreteDistribution& dist) {
  return argmin_set(s, Transform::linear(), dist, SetRule::Sublevel);
}

inline Segment mean_set(const Space& s, const Transform& tau, const DiscreteDistribution& dist) {
  return argmin_set(s, tau, dist, SetRule::Derivative);
}

/// tau-Frechet mean on any supported space; positive-length argmin sets resolve to their midpoint.
inline MeanResult frechet_mean(const Space& s, const Transform& tau, const DiscreteDistribution& dist) {
  const auto d = dist.checked_in(s);
  MeanResult r;
  bool all_vector = true;
  for (int c = 0; c < s.component_count(); ++c) all_vector = all_vector && !s.is_tree_component(c);
  if (s.component_count() == 1 && all_vector && tau.kind() == TransformKind::Power && tau.param() == 2.0) {
    Vec x = Vec::Zero(s.vector_dim(0));
    for (const auto& a : d.atoms()) x += a.weight * a.point.coords();
    r.minimizer = Point::vec(x, 0);
    r.objective = expected_tau(s, tau, d, r.minimizer);
    r.method = "weighted_average";
    return r;
  }
  const auto sol = detail::solve(s, tau, d, 1e-12);
  const auto& best = sol.pieces[sol.best];
  r.iterations = sol.iterations;
  r.method = best.method;
  r.minimizer = best.best;
  const Segment set = argmin_set(s, tau, d, SetRule::Derivative);
  if (set.length > 1e-9) {
    const Geodesic g = s.geodesic(set.a, set.b);
    r.minimizer = g.eval(0.5 * g.length());
  }
  r.objective = expected_tau(s, tau, d, r.minimizer);
  r.certified_gap = std::max(0.0, r.objective - sol.lower_bound);
  return r;
}

inline MeanResult frechet_mean_euclidean(const Transform& tau, const Space& s, const DiscreteDistribution& dist) {
  if (s.component_count() != 1 || !std::holds_alternative<EuclideanSpace>(s.component(0)))
    throw std::invalid_argument("frechet_mean_euclidean needs a Euclidean space");
  return frechet_mean(s, tau, dist);
}

inline MeanResult frechet_mean_tree(const Transform& tau, const Space& s, const DiscreteDistribution& dist) {
  bool any_tree = false;
  for (int c = 0; c < s.component_count(); ++c) any_tree = any_tree || s.is_tree_component(c);
  if (!any_tree) throw std::invalid_argument("frechet_mean_tree needs a tree or glued space with a tree component");
  return frechet_mean(s, tau, dist);
}

/// Distance from x to segment [a, b].
inline double distance_to_segment(const Space& s, const Point& x, const Segment& seg) {
  if (seg.length <= 0.0) return s.distance(x, seg.a);
  return s.project_to_geodesic(x, s.geodesic(seg.a, seg.b)).distance;
}

/// Hausdorff distance between two segments; distance to a convex set is convex, so endpoints suffice.
inline double hausdorff(const Space& s, const Segment& A, const Segment& B) {
  return std::max({distance_to_segment(s, A.a, B), distance_to_segment(s, A.b, B), distance_to_segment(s, B.a, A),
                   distance_to_segment(s, B.b, A)});
}

inline Segment make_segment(const Space& s, const Point& a, const Point& b) {
  return Segment{s.checked(a), s.checked(b), s.distance(a, b)};
}

struct LeftRightMass {
  double left = 0.0;
  double interior = 0.0;
  double right = 0.0;
  double other = 0.0;
};

/// Mass of L(g) (right slope identically +1), of g's interior, and of R(g) (left slope identically -1).
inline LeftRightMass left_right_mass(const Space& s, const DiscreteDistribution& dist, const Geodesic& g) {
  const double L = g.length();
  if (!(L > 0.0)) throw std::invalid_argument("left_right_mass needs a geodesic of positive length");
  std::vector<double> ts;
  const int n = 48;
  for (int i = 1; i < n; ++i) ts.push_back(L * i / n);
  for (double b : g.breakpoints())
    if (b > 0.0 && b < L) ts.push_back(b);
  LeftRightMass m;
  for (const auto& a : dist.atoms()) {
    const auto pr = s.project_to_geodesic(a.point, g);
    if (pr.distance <= 1e-9 && pr.t > 1e-9 && pr.t < L - 1e-9) {
      m.interior += a.weight;
      continue;
    }
    bool left = s.one_sided_slope(a.point, g, 0.0, Side::Right) >= 1.0 - 1e-9;
    bool right = s.one_sided_slope(a.point, g, L, Side::Left) <= -1.0 + 1e-9;
    for (double t : ts) {
      if (left && s.one_sided_slope(a.point, g, t, Side::Right) < 1.0 - 1e-9) left = false;
      if (right && s.one_sided_slope(a.point, g, t, Side::Left) > -1.0 + 1e-9) right = false;
    }
    if (left) m.left += a.weight;
    else if (right) m.right += a.weight;
    else m.other += a.weight;
  }
  return m;
}

}  // namespace tfm
