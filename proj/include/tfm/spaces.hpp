#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace tfm {

using Vec = Eigen::VectorXd;

inline constexpr double kPointTol = 1e-12;

struct TreePoint {
  int edge = 0;
  double offset = 0.0;
};

/// Tagged point: component index plus local coordinates (vector or tree position).
struct Point {
  int component = 0;
  std::variant<Vec, TreePoint> local;

  static Point vec(Vec v, int comp = 0) { return Point{comp, std::move(v)}; }
  static Point vec(std::initializer_list<double> xs, int comp = 0) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return Point{comp, std::move(v)};
  }
  static Point tree(int edge, double offset, int comp = 0) { return Point{comp, TreePoint{edge, offset}}; }

  bool is_vector() const { return std::holds_alternative<Vec>(local); }
  const Vec& coords() const { return std::get<Vec>(local); }
  const TreePoint& tree_point() const { return std::get<TreePoint>(local); }
};

struct EuclideanSpace {
  int dim = 1;
};

struct DiskSpace {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 1.0;
};

class MetricTree {
 public:
  struct Edge {
    int u = 0;
    int v = 0;
    double length = 1.0;
  };

  MetricTree() = default;
  MetricTree(std::vector<std::string> names, std::vector<Edge> edges,
             std::vector<std::optional<Eigen::Vector2d>> coords = {})
      : names_(std::move(names)), coords_(std::move(coords)), edges_(std::move(edges)) {
    if (coords_.empty()) coords_.resize(names_.size());
    finalize();
  }

  int vertex_count() const { return static_cast<int>(names_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::optional<Eigen::Vector2d>>& coords() const { return coords_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int e) const { return edges_.at(static_cast<std::size_t>(e)); }
  double vertex_distance(int a, int b) const { return vdist_[a][b]; }
  /// First edge on the path from v towards root.
  int edge_towards(int root, int v) const { return parent_[root][v]; }
  const std::vector<int>& incident(int v) const { return incident_[v]; }

  std::optional<int> vertex_index(const std::string& name) const {
    for (int i = 0; i < vertex_count(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  TreePoint at_vertex(int v) const {
    const int e = incident_.at(static_cast<std::size_t>(v)).front();
    return TreePoint{e, edges_[e].u == v ? 0.0 : edges_[e].length};
  }

  int other(int e, int v) const { return edges_[e].u == v ? edges_[e].v : edges_[e].u; }

  /// Distance from a tree point to vertex w.
  double to_vertex(const TreePoint& p, int w) const {
    const Edge& e = edges_[p.edge];
    return std::min(p.offset + vdist_[e.u][w], e.length - p.offset + vdist_[e.v][w]);
  }

  double distance(const TreePoint& a, const TreePoint& b) const {
    if (a.edge == b.edge) return std::abs(a.offset - b.offset);
    const Edge& ea = edges_[a.edge];
    const Edge& eb = edges_[b.edge];
    const double au = a.offset, av = ea.length - a.offset;
    const double bu = b.offset, bv = eb.length - b.offset;
    return std::min({au + vdist_[ea.u][eb.u] + bu, au + vdist_[ea.u][eb.v] + bv,
                     av + vdist_[ea.v][eb.u] + bu, av + vdist_[ea.v][eb.v] + bv});
  }

  std::optional<Eigen::Vector2d> embed(const TreePoint& p) const {
    const Edge& e = edges_[p.edge];
    if (!coords_[e.u] || !coords_[e.v]) return std::nullopt;
    const double s = p.offset / e.length;
    return Eigen::Vector2d((1.0 - s) * *coords_[e.u] + s * *coords_[e.v]);
  }

 private:
  void finalize() {
    const int n = vertex_count();
    if (n < 2 || edges_.empty()) throw std::invalid_argument("metric tree needs at least one edge");
    if (static_cast<int>(edges_.size()) != n - 1)
      throw std::invalid_argument("metric tree must have exactly |V| - 1 edges");
    incident_.assign(n, {});
    for (int e = 0; e < edge_count(); ++e) {
      const Edge& ed = edges_[e];
      if (ed.u < 0 || ed.u >= n || ed.v < 0 || ed.v >= n || ed.u == ed.v)
        throw std::invalid_argument("metric tree edge " + std::to_string(e) + " has invalid endpoints");
      if (!(ed.length > 0.0) || !std::isfinite(ed.length))
        throw std::invalid_argument("metric tree edge " + std::to_string(e) + " must have positive length");
      incident_[ed.u].push_back(e);
      incident_[ed.v].push_back(e);
    }
    vdist_.assign(n, std::vector<double>(n, -1.0));
    parent_.assign(n, std::vector<int>(n, -1));
    for (int root = 0; root < n; ++root) {
      std::deque<int> queue{root};
      vdist_[root][root] = 0.0;
      while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (int e : incident_[v]) {
          const int w = other(e, v);
          if (vdist_[root][w] >= 0.0) continue;
          vdist_[root][w] = vdist_[root][v] + edges_[e].length;
          parent_[root][w] = e;
          queue.push_back(w);
        }
      }
      for (int v = 0; v < n; ++v)
        if (vdist_[root][v] < 0.0) throw std::invalid_argument("metric tree is not connected");
    }
  }

  std::vector<std::string> names_;
  std::vector<std::optional<Eigen::Vector2d>> coords_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> incident_;
  std::vector<std::vector<double>> vdist_;
  std::vector<std::vector<int>> parent_;
};

using Component = std::variant<EuclideanSpace, DiskSpace, MetricTree>;

/// A maximal piece of a geodesic inside one component.
struct GeodesicPiece {
  int component = 0;
  double t_begin = 0.0;
  double t_end = 0.0;
  bool vector_piece = true;
  Vec start;      // vector piece: start + (t - t_begin) dir
  Vec dir;
  int edge = -1;  // tree piece: offset0 + sign (t - t_begin)
  double offset0 = 0.0;
  int sign = 1;

  Point at(double t) const {
    const double s = t - t_begin;
    if (vector_piece) return Point::vec(start + s * dir, component);
    return Point::tree(edge, offset0 + sign * s, component);
  }
};

/// Unit-speed geodesic on [0, length].
class Geodesic {
 public:
  Geodesic() = default;
  Geodesic(Point a, Point b, double length, std::vector<GeodesicPiece> pieces)
      : start_(std::move(a)), end_(std::move(b)), length_(length), pieces_(std::move(pieces)) {}

  const Point& start() const { return start_; }
  const Point& end() const { return end_; }
  double length() const { return length_; }
  const std::vector<GeodesicPiece>& pieces() const { return pieces_; }

  Point eval(double t) const {
    if (t <= 0.0 || pieces_.empty()) return start_;
    if (t >= length_) return end_;
    return pieces_[piece_index(t, true)].at(t);
  }

  /// Piece covering [t, t + eps) (right) or (t - eps, t] (left).
  std::size_t piece_index(double t, bool right) const {
    if (pieces_.empty()) throw std::logic_error("degenerate geodesic has no pieces");
    std::size_t lo = 0, hi = pieces_.size() - 1;
    if (right) {
      for (std::size_t i = 0; i < pieces_.size(); ++i)
        if (t < pieces_[i].t_end) return i;
      return hi;
    }
    for (std::size_t i = pieces_.size(); i-- > 0;)
      if (t > pieces_[i].t_begin) return i;
    return lo;
  }

  /// Parameter breakpoints (piece boundaries, including 0 and length).
  std::vector<double> breakpoints() const {
    std::vector<double> b{0.0};
    for (const auto& p : pieces_) b.push_back(p.t_end);
    if (b.back() != length_) b.push_back(length_);
    return b;
  }

  Geodesic reversed() const {
    std::vector<GeodesicPiece> out;
    for (auto it = pieces_.rbegin(); it != pieces_.rend(); ++it) {
      GeodesicPiece p = *it;
      const double len = it->t_end - it->t_begin;
      p.t_begin = length_ - it->t_end;
      p.t_end = length_ - it->t_begin;
      if (p.vector_piece) {
        p.start = it->start + len * it->dir;
        p.dir = -it->dir;
      } else {
        p.offset0 = it->offset0 + it->sign * len;
        p.sign = -it->sign;
      }
      out.push_back(std::move(p));
    }
    return Geodesic(end_, start_, length_, std::move(out));
  }

 private:
  Point start_;
  Point end_;
  double length_ = 0.0;
  std::vector<GeodesicPiece> pieces_;
};

enum class Side { Left, Right };

struct Projection {
  Point point;
  double t = 0.0;
  double distance = 0.0;
};

/// Euclidean space, disk, metric tree, or an acyclic single-point gluing of them.
/// Immutable after construction.
class Space {
 public:
  struct Glue {
    Point a;  // component index inside the point
    Point b;
  };

  static Space euclidean(int k) {
    if (k < 1) throw std::invalid_argument("euclidean dimension must be positive");
    Space s;
    s.components_.push_back(EuclideanSpace{k});
    s.finalize("euclidean");
    return s;
  }
  static Space disk(Eigen::Vector2d center, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("disk radius must be positive");
    Space s;
    s.components_.push_back(DiskSpace{center, radius});
    s.finalize("disk");
    return s;
  }
  static Space tree(MetricTree t) {
    Space s;
    s.components_.push_back(std::move(t));
    s.finalize("tree");
    return s;
  }

  /// A point of one part of a gluing: part index plus a point of that part.
  struct PartPoint {
    int part = 0;
    Point point;
  };

  /// Glue parts at single points; nested glued parts are flattened.
  static Space glued(const std::vector<Space>& parts, const std::vector<std::pair<PartPoint, PartPoint>>& pairs) {
    Space s;
    std::vector<int> offset;
    for (const auto& part : parts) {
      offset.push_back(static_cast<int>(s.components_.size()));
      for (const auto& c : part.components_) s.components_.push_back(c);
      for (const auto& g : part.glue_) {
        Glue h = g;
        h.a.component += offset.back();
        h.b.component += offset.back();
        s.glue_.push_back(h);
      }
    }
    auto flat = [&](const PartPoint& pp) {
      if (pp.part < 0 || pp.part >= static_cast<int>(parts.size()))
        throw std::invalid_argument("glue refers to part " + std::to_string(pp.part) + " which does not exist");
      Point p = parts[static_cast<std::size_t>(pp.part)].checked(pp.point);
      p.component += offset[static_cast<std::size_t>(pp.part)];
      return p;
    };
    for (const auto& [a, b] : pairs) s.glue_.push_back(Glue{flat(a), flat(b)});
    s.finalize("glued");
    return s;
  }

  /// Glue by flat component indices.
  static Space glued_flat(std::vector<Component> comps, std::vector<Glue> glue, std::string kind = "glued") {
    Space s;
    s.components_ = std::move(comps);
    s.glue_ = std::move(glue);
    s.finalize(std::move(kind));
    return s;
  }

  static Space stickfigure() {
    using V2 = Eigen::Vector2d;
    const std::vector<std::pair<std::string, V2>> verts = {
        {"bodyTop", V2(0.0, -0.5)},        {"armJunction", V2(0.0, -1.0)},    {"bodyCenter", V2(0.0, -1.5)},
        {"bodyBottomHalf", V2(0.0, -2.0)}, {"bodyBottom", V2(0.0, -2.5)},     {"leftArmOuter", V2(-0.5, -1.0)},
        {"rightArmOuter", V2(0.5, -1.0)},  {"leftLegBottom", V2(-0.5, -4.0)}, {"rightLegBottom", V2(0.5, -4.0)}};
    const std::vector<std::pair<int, int>> pairs = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 5}, {1, 6}, {4, 7}, {4, 8}};
    std::vector<std::string> names;
    std::vector<std::optional<V2>> coords;
    for (const auto& [n, c] : verts) {
      names.push_back(n);
      coords.emplace_back(c);
    }
    std::vector<MetricTree::Edge> edges;
    for (const auto& [u, v] : pairs) edges.push_back({u, v, (verts[u].second - verts[v].second).norm()});
    MetricTree body(names, edges, coords);
    const TreePoint neck = body.at_vertex(0);

    Space s = glued_flat({DiskSpace{V2(0.0, 0.0), 0.5}, std::move(body)},
                         {Glue{Point::vec({0.0, -0.5}, 0), Point{1, neck}}}, "stickfigure");
    s.landmarks_["headCenter"] = Point::vec({0.0, 0.0}, 0);
    s.landmarks_["headTop"] = Point::vec({0.0, 0.5}, 0);
    s.landmarks_["bodyTopHalf"] = s.vertex_point("armJunction").value();
    s.landmarks_["leftArmInner"] = s.landmarks_["bodyTopHalf"];
    s.landmarks_["rightArmInner"] = s.landmarks_["bodyTopHalf"];
    s.landmarks_["leftLegTop"] = s.vertex_point("bodyBottom").value();
    s.landmarks_["rightLegTop"] = s.landmarks_["leftLegTop"];
    return s;
  }

  const std::string& kind_name() const { return kind_; }
  const std::vector<Component>& components() const { return components_; }
  int component_count() const { return static_cast<int>(components_.size()); }
  const Component& component(int c) const { return components_.at(static_cast<std::size_t>(c)); }
  const std::vector<Glue>& glue() const { return glue_; }

  bool is_tree_component(int c) const { return std::holds_alternative<MetricTree>(component(c)); }
  const MetricTree& tree_component(int c) const { return std::get<MetricTree>(component(c)); }
  bool has_unbounded_component() const {
    for (const auto& c : components_)
      if (std::holds_alternative<EuclideanSpace>(c)) return true;
    return false;
  }
  /// Dimension of local vectors in component c, 0 for trees.
  int vector_dim(int c) const {
    const auto& comp = component(c);
    if (const auto* e = std::get_if<EuclideanSpace>(&comp)) return e->dim;
    if (std::holds_alternative<DiskSpace>(comp)) return 2;
    return 0;
  }

  /// Validates and canonicalizes (clamps tree offsets within 1e-12 rounding).
  Point checked(const Point& p) const {
    if (p.component < 0 || p.component >= component_count())
      throw std::invalid_argument("point component " + std::to_string(p.component) + " not in space");
    const auto& comp = component(p.component);
    if (const auto* t = std::get_if<MetricTree>(&comp)) {
      if (!std::holds_alternative<TreePoint>(p.local)) throw std::invalid_argument("expected a tree point");
      TreePoint tp = p.tree_point();
      if (tp.edge < 0 || tp.edge >= t->edge_count()) throw std::invalid_argument("tree point edge out of range");
      const double len = t->edge(tp.edge).length;
      if (tp.offset < -kPointTol * (1.0 + len) || tp.offset > len * (1.0 + kPointTol) + kPointTol)
        throw std::invalid_argument("tree point offset outside [0, edge length]");
      tp.offset = std::clamp(tp.offset, 0.0, len);
      return Point{p.component, tp};
    }
    if (!p.is_vector()) throw std::invalid_argument("expected a coordinate vector");
    if (p.coords().size() != vector_dim(p.component)) throw std::invalid_argument("point dimension mismatch");
    if (!p.coords().allFinite()) throw std::invalid_argument("point coordinates must be finite");
    if (const auto* d = std::get_if<DiskSpace>(&comp)) {
      const double r = (p.coords() - d->center).norm();
      if (r > d->radius * (1.0 + 1e-9)) throw std::invalid_argument("point outside disk");
    }
    return p;
  }

  /// Distance between local representations inside component c.
  double local_distance(int c, const Point& a, const Point& b) const {
    const auto& comp = component(c);
    if (const auto* t = std::get_if<MetricTree>(&comp)) return t->distance(a.tree_point(), b.tree_point());
    return (a.coords() - b.coords()).norm();
  }

  double distance(const Point& p, const Point& q) const {
    if (p.component == q.component) return local_distance(p.component, p, q);
    double total = 0.0;
    Point cur = p;
    int c = p.component;
    while (c != q.component) {
      const Hop& h = hop(c, q.component);
      total += local_distance(c, cur, h.here);
      cur = h.there;
      c = h.there.component;
    }
    return total + local_distance(c, cur, q);
  }

  bool same_point(const Point& p, const Point& q, double tol = kPointTol) const {
    return distance(p, q) <= tol;
  }

  Geodesic geodesic(const Point& p, const Point& q) const {
    std::vector<GeodesicPiece> pieces;
    double t = 0.0;
    Point cur = p;
    int c = p.component;
    while (c != q.component) {
      const Hop& h = hop(c, q.component);
      append_local(c, cur, h.here, t, pieces);
      cur = h.there;
      c = h.there.component;
    }
    append_local(c, cur, q, t, pieces);
    return Geodesic(p, q, t, std::move(pieces));
  }

  /// Local point in component c of the glue leading towards component target, or
  /// nullopt when c == target.
  std::optional<Point> exit_towards(int c, int target) const {
    if (c == target) return std::nullopt;
    return hop(c, target).here;
  }

  /// Representative of point y inside component c: y itself or the glue point through which y is reached.
  Point anchor_in(int c, const Point& y) const {
    if (y.component == c) return y;
    return hop(c, y.component).here;
  }

  /// One-sided derivative of t -> d(y, g(t)); exact on every component kind.
  double one_sided_slope(const Point& y, const Geodesic& g, double t, Side side) const {
    const double L = g.length();
    if (side == Side::Left && !(t > 0.0 && t <= L)) throw std::domain_error("left slope needs t in (0, L]");
    if (side == Side::Right && !(t >= 0.0 && t < L)) throw std::domain_error("right slope needs t in [0, L)");
    const GeodesicPiece& pc = g.pieces()[g.piece_index(t, side == Side::Right)];
    const Point a = anchor_in(pc.component, y);
    const double dirsign = side == Side::Right ? 1.0 : -1.0;
    double rate;
    if (pc.vector_piece) {
      const Vec x = pc.start + (t - pc.t_begin) * pc.dir;
      const Vec diff = x - a.coords();
      const double r = diff.norm();
      rate = r <= 1e-14 * (1.0 + a.coords().norm()) ? 1.0 : dirsign * diff.dot(pc.dir) / r;
    } else {
      const MetricTree& tr = tree_component(pc.component);
      const double o = pc.offset0 + pc.sign * (t - pc.t_begin);
      const double s = dirsign * pc.sign;  // direction of motion in offset coordinates
      const TreePoint& ap = a.tree_point();
      const MetricTree::Edge& e = tr.edge(pc.edge);
      if (ap.edge == pc.edge) {
        rate = std::abs(o - ap.offset) <= 1e-14 * (1.0 + e.length) ? 1.0 : (o > ap.offset ? s : -s);
      } else {
        const bool u_side = tr.to_vertex(ap, e.u) < tr.to_vertex(ap, e.v);
        rate = u_side ? s : -s;
      }
    }
    const double slope = side == Side::Right ? rate : -rate;
    return std::clamp(slope, -1.0, 1.0);
  }

  /// Richardson-extrapolated one-sided difference quotient (steps 1e-4 and 5e-5).
  double one_sided_slope_numeric(const Point& y, const Geodesic& g, double t, Side side) const {
    auto f = [&](double s) { return distance(y, g.eval(s)); };
    auto quotient = [&](double h) {
      return side == Side::Right ? (f(t + h) - f(t)) / h : (f(t) - f(t - h)) / h;
    };
    const double room = side == Side::Right ? g.length() - t : t;
    const double h1 = std::min(1e-4, 0.5 * room), h2 = 0.5 * h1;
    return std::clamp(2.0 * quotient(h2) - quotient(h1), -1.0, 1.0);
  }

  /// Exact projection: per piece, the closed-form foot on a vector segment, or the anchor's offset
  /// (else a piece end) on a tree edge; the nearest candidate wins.
  Projection project_to_geodesic(const Point& q, const Geodesic& g) const {
    Projection best{g.start(), 0.0, distance(q, g.start())};
    auto consider = [&](double t) {
      t = std::clamp(t, 0.0, g.length());
      const Point x = g.eval(t);
      const double d = distance(q, x);
      if (d < best.distance) best = Projection{x, t, d};
    };
    consider(g.length());
    for (const auto& pc : g.pieces()) {
      consider(pc.t_end);
      const Point a = anchor_in(pc.component, q);
      const double len = pc.t_end - pc.t_begin;
      if (pc.vector_piece) {
        consider(pc.t_begin + std::clamp((a.coords() - pc.start).dot(pc.dir), 0.0, len));
      } else if (a.tree_point().edge == pc.edge) {
        consider(pc.t_begin + std::clamp(pc.sign * (a.tree_point().offset - pc.offset0), 0.0, len));
      }
    }
    return best;
  }

  /// lhs - rhs of 1/2 d(y0,q)^2 + 1/2 d(y1,q)^2 - 1/4 d(y0,y1)^2 >= d(q,m)^2, m the midpoint.
  double hadamard_quadruple_margin(const Point& y0, const Point& y1, const Point& q) const {
    const Geodesic g = geodesic(y0, y1);
    const Point m = g.eval(0.5 * g.length());
    const double a = distance(y0, q), b = distance(y1, q), c = g.length(), dm = distance(q, m);
    return 0.5 * a * a + 0.5 * b * b - 0.25 * c * c - dm * dm;
  }

  std::optional<Eigen::Vector2d> embed_2d(const Point& p) const {
    const auto& comp = component(p.component);
    if (const auto* t = std::get_if<MetricTree>(&comp)) return t->embed(p.tree_point());
    if (p.coords().size() == 2) return Eigen::Vector2d(p.coords());
    return std::nullopt;
  }

  /// First tree vertex with this name, searching components in order.
  std::optional<Point> vertex_point(const std::string& name) const {
    for (int c = 0; c < component_count(); ++c) {
      if (!is_tree_component(c)) continue;
      if (auto v = tree_component(c).vertex_index(name)) return Point{c, tree_component(c).at_vertex(*v)};
    }
    return std::nullopt;
  }

  /// Named landmark or tree vertex.
  std::optional<Point> named_point(const std::string& name) const {
    if (auto it = landmarks_.find(name); it != landmarks_.end()) return it->second;
    return vertex_point(name);
  }
  const std::map<std::string, Point>& landmarks() const { return landmarks_; }

  /// Upper bound on distances between points of bounded components plus glue paths; inf if unbounded.
  double diameter_bound() const {
    double total = 0.0;
    for (const auto& c : components_) {
      if (std::holds_alternative<EuclideanSpace>(c)) return std::numeric_limits<double>::infinity();
      if (const auto* d = std::get_if<DiskSpace>(&c)) total += 2.0 * d->radius;
      if (const auto* t = std::get_if<MetricTree>(&c))
        for (const auto& e : t->edges()) total += e.length;
    }
    return total;
  }

 private:
  struct Hop {
    Point here;   // glue point in the current component
    Point there;  // same glue point in the next component
  };

  const Hop& hop(int from, int to) const { return hops_[from][to]; }

  void finalize(std::string kind) {
    kind_ = std::move(kind);
    const int n = component_count();
    if (n == 0) throw std::invalid_argument("space needs at least one component");
    if (static_cast<int>(glue_.size()) != n - 1)
      throw std::invalid_argument("gluing graph must be a tree: expected " + std::to_string(n - 1) + " glue pairs");
    for (auto& g : glue_) {
      g.a = checked(g.a);
      g.b = checked(g.b);
      if (g.a.component == g.b.component) throw std::invalid_argument("glue pair joins a component to itself");
    }
    std::vector<std::vector<Hop>> adj_hops(n);
    std::vector<std::vector<int>> adj(n);
    for (const auto& g : glue_) {
      adj[g.a.component].push_back(g.b.component);
      adj_hops[g.a.component].push_back(Hop{g.a, g.b});
      adj[g.b.component].push_back(g.a.component);
      adj_hops[g.b.component].push_back(Hop{g.b, g.a});
    }
    hops_.assign(n, std::vector<Hop>(n));
    for (int target = 0; target < n; ++target) {
      std::vector<int> seen(n, 0);
      std::deque<int> queue{target};
      seen[target] = 1;
      while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (std::size_t k = 0; k < adj[v].size(); ++k) {
          const int w = adj[v][k];
          if (seen[w]) continue;
          seen[w] = 1;
          // w reaches target by crossing into v: find w's side of this glue
          for (std::size_t j = 0; j < adj[w].size(); ++j)
            if (adj[w][j] == v) hops_[w][target] = adj_hops[w][j];
          queue.push_back(w);
        }
      }
      for (int v = 0; v < n; ++v)
        if (!seen[v]) throw std::invalid_argument("gluing graph is not connected");
    }
  }

  void append_local(int c, const Point& a, const Point& b, double& t, std::vector<GeodesicPiece>& out) const {
    const auto& comp = component(c);
    if (const auto* tr = std::get_if<MetricTree>(&comp)) {
      append_tree(c, *tr, a.tree_point(), b.tree_point(), t, out);
      return;
    }
    const Vec diff = b.coords() - a.coords();
    const double len = diff.norm();
    if (len <= 0.0) return;
    GeodesicPiece p;
    p.component = c;
    p.t_begin = t;
    p.t_end = t + len;
    p.vector_piece = true;
    p.start = a.coords();
    p.dir = diff / len;
    out.push_back(std::move(p));
    t += len;
  }

  static void push_edge_piece(int c, int edge, double from, double to, double& t, std::vector<GeodesicPiece>& out) {
    const double len = std::abs(to - from);
    if (len <= 0.0) return;
    GeodesicPiece p;
    p.component = c;
    p.t_begin = t;
    p.t_end = t + len;
    p.vector_piece = false;
    p.edge = edge;
    p.offset0 = from;
    p.sign = to >= from ? 1 : -1;
    out.push_back(std::move(p));
    t += len;
  }

  static void append_tree(int c, const MetricTree& tr, const TreePoint& a, const TreePoint& b, double& t,
                          std::vector<GeodesicPiece>& out) {
    if (a.edge == b.edge) {
      push_edge_piece(c, a.edge, a.offset, b.offset, t, out);
      return;
    }
    const auto& ea = tr.edge(a.edge);
    const auto& eb = tr.edge(b.edge);
    double best = std::numeric_limits<double>::infinity();
    int x = -1, y = -1;
    for (int xa : {ea.u, ea.v})
      for (int yb : {eb.u, eb.v}) {
        const double d = (xa == ea.u ? a.offset : ea.length - a.offset) + tr.vertex_distance(xa, yb) +
                         (yb == eb.u ? b.offset : eb.length - b.offset);
        if (d < best) {
          best = d;
          x = xa;
          y = yb;
        }
      }
    push_edge_piece(c, a.edge, a.offset, x == ea.u ? 0.0 : ea.length, t, out);
    int v = x;
    while (v != y) {
      const int e = tr.edge_towards(y, v);
      const auto& ed = tr.edge(e);
      push_edge_piece(c, e, ed.u == v ? 0.0 : ed.length, ed.u == v ? ed.length : 0.0, t, out);
      v = tr.other(e, v);
    }
    push_edge_piece(c, b.edge, y == eb.u ? 0.0 : eb.length, b.offset, t, out);
  }

  std::string kind_;
  std::vector<Component> components_;
  std::vector<Glue> glue_;
  std::vector<std::vector<Hop>> hops_;
  std::map<std::string, Point> landmarks_;
};

}  // namespace tfm
