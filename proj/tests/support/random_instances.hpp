#pragma once

// Hand-rolled generators for property tests. Every generator is a pure function of the Gen state,
// so a failing case is replayed by its seed.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tfm/means.hpp"
#include "tfm/spaces.hpp"
#include "tfm/transforms.hpp"

namespace tfm::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double a = 0.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>()(rng_); }
  bool coin(double p = 0.5) { return uniform() < p; }

 private:
  std::mt19937_64 rng_;
};

/// Random metric tree: vertex i > 0 hangs off a uniformly chosen earlier vertex.
inline MetricTree random_tree(Gen& g, int max_edges = 12) {
  const int edges = g.integer(1, max_edges);
  std::vector<std::string> names;
  std::vector<MetricTree::Edge> es;
  for (int v = 0; v <= edges; ++v) names.push_back("v" + std::to_string(v));
  for (int v = 1; v <= edges; ++v) es.push_back({g.integer(0, v - 1), v, g.uniform(0.2, 2.0)});
  return MetricTree(names, es);
}

enum class SpaceKind { Euclidean, Tree, Stickfigure };

inline Space random_space(Gen& g, SpaceKind kind) {
  switch (kind) {
    case SpaceKind::Euclidean: return Space::euclidean(g.integer(2, 5));
    case SpaceKind::Tree: return Space::tree(random_tree(g));
    case SpaceKind::Stickfigure: return Space::stickfigure();
  }
  return Space::euclidean(2);
}

inline Point random_point(Gen& g, const Space& s, double spread = 1.5) {
  const int c = g.integer(0, s.component_count() - 1);
  const Component& comp = s.component(c);
  if (const auto* tr = std::get_if<MetricTree>(&comp)) {
    const int e = g.integer(0, tr->edge_count() - 1);
    const double len = tr->edge(e).length;
    // vertices with positive probability, so kinks and ties get exercised
    if (g.coin(0.2)) return Point::tree(e, g.coin() ? 0.0 : len, c);
    return Point::tree(e, g.uniform(0.0, len), c);
  }
  if (const auto* d = std::get_if<DiskSpace>(&comp)) {
    const double r = d->radius * std::sqrt(g.uniform());
    const double phi = g.uniform(0.0, 6.283185307179586);
    return Point::vec(Vec(d->center + r * Eigen::Vector2d(std::cos(phi), std::sin(phi))), c);
  }
  Vec x(s.vector_dim(c));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = spread * g.normal();
  return Point::vec(x, c);
}

/// 1-20 atoms; about one draw in five repeats an earlier atom.
inline DiscreteDistribution random_distribution(Gen& g, const Space& s, int max_atoms = 20) {
  const int n = g.integer(1, max_atoms);
  std::vector<Atom> atoms;
  for (int i = 0; i < n; ++i) {
    const Point p = (!atoms.empty() && g.coin(0.2)) ? atoms[static_cast<std::size_t>(g.integer(0, i - 1))].point
                                                    : random_point(g, s);
    atoms.push_back(Atom{p, g.uniform(0.05, 1.0)});
  }
  return DiscreteDistribution::normalized(std::move(atoms));
}

inline Transform random_transform(Gen& g, bool allow_conic = true) {
  switch (g.integer(0, allow_conic ? 7 : 6)) {
    case 0: return Transform::power(g.uniform(1.0, 2.0));
    case 1: return Transform::power_normalized(g.uniform(1.0, 2.0));
    case 2: return Transform::huber(g.uniform(0.2, 3.0));
    case 3: return Transform::pseudo_huber(g.uniform(0.2, 3.0));
    case 4: return Transform::log_cosh();
    case 5: return Transform::linear();
    case 6: return Transform::power(2.0);
    default:
      return Transform::conic({{g.uniform(0.1, 1.0), random_transform(g, false)},
                               {g.uniform(0.1, 1.0), random_transform(g, false)}});
  }
}

inline const char* kind_name(SpaceKind k) {
  switch (k) {
    case SpaceKind::Euclidean: return "euclidean";
    case SpaceKind::Tree: return "tree";
    case SpaceKind::Stickfigure: return "stickfigure";
  }
  return "?";
}

}  // namespace tfm::testing
