#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "support/random_instances.hpp"
#include "tfm/inequalities.hpp"

using namespace tfm;
using tfm::testing::Gen;
using tfm::testing::SpaceKind;

namespace {

const SpaceKind kKinds[] = {SpaceKind::Euclidean, SpaceKind::Tree, SpaceKind::Stickfigure};

DiscreteDistribution pm(double z) {
  return DiscreteDistribution({{Point::vec({-z}), 0.5}, {Point::vec({z}), 0.5}});
}

Space tripod_space() { return Space::tree(MetricTree({"c", "a", "b", "d"}, {{0, 1, 1.0}, {0, 2, 1.0}, {0, 3, 1.0}})); }

DiscreteDistribution tripod_leaves(const Space& s) {
  return DiscreteDistribution(
      {{*s.vertex_point("a"), 1.0 / 3}, {*s.vertex_point("b"), 1.0 / 3}, {*s.vertex_point("d"), 1.0 / 3}});
}

bool accepted(const InequalityReport& r) { return r.margin >= -1e-9 * (1.0 + std::abs(r.lhs)); }

Point random_other(Gen& g, const Space& s, const Point& m) {
  for (;;) {
    const Point q = tfm::testing::random_point(g, s);
    if (s.distance(q, m) > 1e-6) return q;
  }
}

}  // namespace

TEST(Inequalities, HuberReferenceValues) {
  EXPECT_NEAR(huber_reference_functional(0.5, 1.0, 0.25), 0.03125, 1e-15);
  EXPECT_NEAR(huber_reference_functional(0.5, 1.0, 1.0), 0.4375, 1e-15);
  EXPECT_NEAR(huber_reference_functional(2.0, 1.0, 2.5), 0.5625, 1e-15);
  EXPECT_THROW(huber_reference_functional(0.0, 1.0, 0.0), std::invalid_argument);
}

TEST(Inequalities, HuberReferenceMatchesTheFunctional) {
  const Space s = Space::euclidean(1);
  for (double z : {0.5, 1.0, 2.0})
    for (double delta : {0.5, 1.0, 2.0}) {
      const Transform h = Transform::huber(delta);
      for (int i = 0; i < 1000; ++i) {
        const double q = -5.0 + 10.0 * i / 999.0;
        const double f = variance_functional(s, h, pm(z), Point::vec({q}), Point::vec({0.0}));
        EXPECT_NEAR(huber_reference_functional(z, delta, q), f, 1e-12) << z << ' ' << delta << ' ' << q;
      }
    }
}

TEST(Inequalities, BowtieClosedForm) {
  const Space s = Space::euclidean(2);
  const Geodesic g = s.geodesic(Point::vec({0.0, 0.0}), Point::vec({2.0, 0.0}));
  const double eta = std::numbers::sqrt2 / 2;
  EXPECT_TRUE(bowtie_membership(s, Point::vec({1.0, 3.0}), g, eta));
  EXPECT_FALSE(bowtie_membership(s, Point::vec({1.0, 0.5}), g, eta));
  EXPECT_FALSE(bowtie_membership(s, Point::vec({-1.0, 0.0}), g, 0.01));  // on the line, slopes +-1
  EXPECT_FALSE(bowtie_membership(s, Point::vec({0.0, 0.0}), g, 0.01));
  EXPECT_THROW(bowtie_membership(s, Point::vec({1.0, 1.0}), g, 1.0), std::invalid_argument);
  // at eta = sqrt(2)/2 membership is max(|t - t0|, |t0|) <= h for y = (t0, h)
  Gen gen(40);
  for (int i = 0; i < 2000; ++i) {
    const double t0 = gen.uniform(-3, 3), h = gen.uniform(0.01, 3);
    const bool closed = std::max(std::abs(2.0 - t0), std::abs(t0)) <= h;
    if (std::abs(std::max(std::abs(2.0 - t0), std::abs(t0)) - h) < 1e-9) continue;
    EXPECT_EQ(bowtie_membership(s, Point::vec({t0, h}), BowtieSpec{g.start(), g.end(), eta}), closed);
  }
}

TEST(Inequalities, AffineReductionHuberExample) {
  const Space s = Space::euclidean(1);
  const auto ar = vi_affine_reduction(s, Transform::huber(1.0), pm(2.0), Point::vec({0.0}), Point::vec({2.5}));
  EXPECT_NEAR(ar.report.lhs, 0.5625, 1e-15);
  EXPECT_NEAR(ar.report.rhs, 0.5, 1e-15);
  EXPECT_NEAR(ar.report.margin, 0.0625, 1e-15);
  EXPECT_TRUE(ar.b0.member);
  // inside the Huber mean set both sides vanish
  const auto flat = vi_affine_reduction(s, Transform::huber(1.0), pm(2.0), Point::vec({0.0}), Point::vec({0.7}));
  EXPECT_NEAR(flat.report.lhs, 0.0, 1e-15);
  EXPECT_NEAR(flat.report.rhs, 0.0, 1e-15);
  // z < delta leaves m outside B0
  EXPECT_THROW(vi_affine_reduction(s, Transform::huber(1.0), pm(0.5), Point::vec({0.0}), Point::vec({1.0})),
               std::invalid_argument);
  EXPECT_THROW(vi_affine_reduction(s, Transform::power(1.5), pm(2.0), Point::vec({0.0}), Point::vec({1.0})),
               std::invalid_argument);
}

TEST(Inequalities, HadamardMeanExamples) {
  const Space tri = tripod_space();
  const auto d = tripod_leaves(tri);
  const auto r = vi_hadamard_mean(tri, d, *tri.vertex_point("a"));
  EXPECT_GT(r.margin, 0.0);
  // m = center: lhs = (1/3)(0 + 4 + 4) - 1 = 5/3, rhs = 1
  EXPECT_NEAR(r.lhs, 5.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.rhs, 1.0, 1e-9);

  const Space e = Space::euclidean(3);
  Gen g(41);
  for (int i = 0; i < 200; ++i) {
    const auto dist = tfm::testing::random_distribution(g, e);
    const auto rep = vi_hadamard_mean(e, dist, tfm::testing::random_point(g, e));
    EXPECT_NEAR(rep.margin, 0.0, 1e-9 * (1 + std::abs(rep.lhs)));
  }
  const Point m = Point::vec({1.0, 2.0, 3.0}), q = Point::vec({0.0, 0.0, 1.0});
  const auto dm = vi_hadamard_mean(e, DiscreteDistribution::point_mass(m), m, q);
  EXPECT_NEAR(dm.lhs, 9.0, 1e-12);
  EXPECT_NEAR(dm.rhs, 9.0, 1e-12);
}

TEST(Inequalities, TransformedExamples) {
  const Space s = Space::euclidean(1);
  const Point m = Point::vec({0.0});
  // symmetric +-1: rhs = q^2/4 (tau''(1) + tau''(1 + |q|)) for smooth tau and small q
  const Transform lc = Transform::log_cosh();
  for (double q : {0.1, 0.4, 0.9}) {
    const auto r = vi_transformed(s, lc, pm(1.0), m, Point::vec({q}));
    EXPECT_NEAR(r.rhs, 0.25 * q * q * (lc.second_right(1.0) + lc.second_right(1.0 + q)), 1e-15);
    EXPECT_TRUE(r.satisfied);
  }
  // alpha = 1.5 at q = 0.3: lhs inside the sandwich, rhs below lhs
  const double a = 1.5, q = 0.3;
  const auto r = vi_transformed(s, Transform::power(a), pm(1.0), m, Point::vec({q}));
  EXPECT_GE(r.lhs, 0.5 * a * (a - 1) * q * q);
  EXPECT_LE(r.lhs, 0.5 * a * (a - 1) * q * q + 4.0 / 3.0 * q * q * q);
  EXPECT_LE(r.rhs, r.lhs);
  EXPECT_THROW(vi_transformed(s, lc, pm(1.0), m, m), std::invalid_argument);
}

TEST(Inequalities, PowerTwoReducesToTheHadamardBound) {
  Gen g(42);
  for (auto kind : kKinds)
    for (int i = 0; i < 100; ++i) {
      const Space s = tfm::testing::random_space(g, kind);
      const auto d = tfm::testing::random_distribution(g, s);
      const Point m = tfm::testing::random_point(g, s), q = random_other(g, s, m);
      const auto t = vi_transformed(s, Transform::power(2.0), d, m, q);
      const auto h = vi_hadamard_mean(s, d, m, q);
      EXPECT_DOUBLE_EQ(t.rhs, h.rhs);  // equal up to rounding of the weight sum
      EXPECT_NEAR(t.lhs, h.lhs, 1e-12 * (1 + std::abs(h.lhs)));
    }
}

TEST(Inequalities, PointMassExamples) {
  const Space s = Space::euclidean(1);
  const Transform h = Transform::huber(1.0);
  const Point m = Point::vec({0.3}), q = Point::vec({2.0});
  const auto r = vi_pointmass(s, h, DiscreteDistribution::point_mass(m), m, q);
  EXPECT_NEAR(r.lhs, h.value(1.7), 1e-15);
  EXPECT_NEAR(r.rhs, h.value(1.7), 1e-15);
  EXPECT_THROW(vi_pointmass(s, Transform::linear(), pm(1.0), Point::vec({0.0}), q), std::invalid_argument);
  // atom of weight 0.4 at the mean of a symmetric law
  const auto mixed = DiscreteDistribution({{Point::vec({0.0}), 0.4}, {Point::vec({-1.0}), 0.3}, {Point::vec({1.0}), 0.3}});
  const auto p2 = vi_pointmass(s, Transform::power(2.0), mixed, Point::vec({0.0}), Point::vec({0.8}));
  EXPECT_NEAR(p2.rhs, 0.4 * 0.64, 1e-15);
  EXPECT_GE(p2.margin, 0.0);
  const auto none = vi_pointmass(s, h, pm(1.0), Point::vec({0.0}), Point::vec({0.5}));
  EXPECT_EQ(none.rhs, 0.0);
  // an atom next to a non-optimal point: the off-atom part decreases towards q
  const auto lopsided = DiscreteDistribution({{Point::vec({0.0}), 0.3}, {Point::vec({2.0}), 0.7}});
  EXPECT_THROW(vi_pointmass(s, Transform::power(1.5), lopsided, Point::vec({0.0}), Point::vec({1.0})),
               std::invalid_argument);
}

TEST(Inequalities, MedianExamples) {
  const Space s = Space::euclidean(2);
  const auto corners = DiscreteDistribution({{Point::vec({1.0, 1.0}), 0.25},
                                             {Point::vec({-1.0, 1.0}), 0.25},
                                             {Point::vec({1.0, -1.0}), 0.25},
                                             {Point::vec({-1.0, -1.0}), 0.25}});
  const auto r = vi_median(s, corners, Point::vec({0.0, 0.0}), Point::vec({0.5, 0.0}), 0.5);
  EXPECT_GT(r.rhs, 0.0);
  EXPECT_GE(r.margin, 0.0);
  const auto line = DiscreteDistribution({{Point::vec({-1.0, 0.0}), 0.5}, {Point::vec({1.0, 0.0}), 0.5}});
  EXPECT_EQ(vi_median(s, line, Point::vec({0.0, 0.0}), Point::vec({0.5, 0.0}), 0.5).rhs, 0.0);
}

TEST(Inequalities, MedianOnGeodesicReproducesTheRealIdentity) {
  const Space s = Space::euclidean(1);
  const Geodesic g = s.geodesic(Point::vec({-5.0}), Point::vec({5.0}));
  const auto d = DiscreteDistribution(
      {{Point::vec({-1.5}), 0.3}, {Point::vec({0.0}), 0.2}, {Point::vec({0.4}), 0.25}, {Point::vec({1.2}), 0.25}});
  for (double t : {0.2, 0.4, 1.0, 3.0, -0.7}) {
    const auto r = vi_median_on_geodesic(s, d, g, Point::vec({0.0}), Point::vec({t}));
    // direct sums: E|X - t| - |X| and the remainder E[(|t| - |X|) 1(X in (0, |t|] on the side of t)]
    double lhs = 0.0, rem = 0.0;
    for (const auto& a : d.atoms()) {
      const double x = a.point.coords()[0];
      lhs += a.weight * (std::abs(x - t) - std::abs(x));
      const double y = t > 0 ? x : -x;
      if (y > 0.0 && y <= std::abs(t)) rem += a.weight * (std::abs(t) - y);
    }
    EXPECT_NEAR(r.lhs, lhs, 1e-15);
    EXPECT_NEAR(r.margin, rem, 1e-12);
  }
  const auto sym = DiscreteDistribution({{Point::vec({-1.0}), 0.5}, {Point::vec({1.0}), 0.5}});
  EXPECT_THROW(vi_median_on_geodesic(s, sym, g, Point::vec({1.5}), Point::vec({0.0})), std::invalid_argument);
  const Space plane = Space::euclidean(2);
  EXPECT_THROW(vi_median_on_geodesic(plane, DiscreteDistribution::point_mass(Point::vec({0.0, 1.0})),
                                     plane.geodesic(Point::vec({0.0, 0.0}), Point::vec({1.0, 0.0})),
                                     Point::vec({0.0, 0.0}), Point::vec({1.0, 1.0})),
               std::invalid_argument);
}

TEST(Inequalities, GeneralBoundExamples) {
  const Space s = Space::euclidean(1);
  const Transform sq = Transform::power(2.0);
  const Point p = Point::vec({0.0}), q = Point::vec({10.0});
  const auto b = general_bounds(s, sq, pm(1.0), p, q, 2.0);
  EXPECT_NEAR(b.exact, 100.0, 1e-12);
  ASSERT_TRUE(b.lower);
  EXPECT_LE(*b.lower, b.exact);
  EXPECT_GE(b.upper, b.exact);
  EXPECT_FALSE(b.upper_near);
  // point mass with split 0
  const auto one = general_bounds(s, sq, DiscreteDistribution::point_mass(p), p, q, 0.0);
  EXPECT_NEAR(one.exact, 100.0, 1e-12);
  EXPECT_GE(one.upper, sq.value(10.0));
  // split beyond every atom: the lower bound is tau(d - s) - tau(s)
  EXPECT_NEAR(general_bound_lower(s, sq, pm(1.0), p, q, 5.0), 25.0 - 25.0, 1e-12);
  EXPECT_THROW(general_bound_upper_near(s, sq, pm(1.0), p, q, 2.0), std::invalid_argument);
  EXPECT_THROW(general_bound_lower(s, sq, pm(1.0), p, q, 11.0), std::invalid_argument);
}

TEST(InequalitiesProperty, GeneralBoundsSandwichTheIncrement) {
  Gen g(43);
  for (auto kind : kKinds)
    for (int i = 0; i < 300; ++i) {
      const Space s = tfm::testing::random_space(g, kind);
      const auto d = tfm::testing::random_distribution(g, s);
      const Transform tau = tfm::testing::random_transform(g);
      const Point p = tfm::testing::random_point(g, s), q = tfm::testing::random_point(g, s);
      const double split = g.uniform(0.0, 2.0);
      const auto b = general_bounds(s, tau, d, p, q, split);
      const double tol = 1e-9 * (1 + std::abs(b.exact));
      EXPECT_LE(b.exact, b.upper + tol) << tau.name();
      if (b.upper_near) {
        EXPECT_LE(b.exact, *b.upper_near + tol) << tau.name();
      }
      if (b.lower) {
        EXPECT_GE(b.exact, *b.lower - tol) << tau.name();
      }
    }
}

TEST(Inequalities, AsymptoticRatios) {
  const Space s = Space::euclidean(1);
  const auto rows = asymptotic_ratio_check(s, Transform::power(2.0), pm(1.0), Point::vec({0.0}), {1e3, 1e-6});
  EXPECT_NEAR(rows[0].far_ratio, 1.0, 0.05);
  EXPECT_LE(rows[1].near_ratio, rows[1].near_bound + 1e-3);
  // linear: (r - c) / r
  const auto lin = asymptotic_ratio_check(s, Transform::linear(), pm(1.0), Point::vec({0.5}), {1e3});
  EXPECT_NEAR(lin[0].far_ratio, (1e3 - 0.5) / 1e3, 1e-12);
  EXPECT_THROW(asymptotic_ratio_check(Space::tree(MetricTree({"a", "b"}, {{0, 1, 1.0}})), Transform::linear(),
                                      DiscreteDistribution::point_mass(Point::tree(0, 0.0)), Point::tree(0, 0.0), {1.0}),
               std::invalid_argument);
}

TEST(Inequalities, GrowthRegimeExponents) {
  const Space s = Space::euclidean(1);
  const std::vector<double> near{1e-3, 2e-3, 4e-3, 8e-3}, far{10.0, 100.0};
  EXPECT_NEAR(growth_regime_probe(s, Transform::power(2.0), pm(1.0), Point::vec({0.0}), 0.0, near, far).near_exponent,
              2.0, 0.1);
  EXPECT_NEAR(growth_regime_probe(s, Transform::power(1.5), pm(1.0), Point::vec({0.0}), 0.0, near, far).near_exponent,
              2.0, 0.1);
  EXPECT_THROW(growth_regime_probe(s, Transform::power(2.0), pm(1.0), Point::vec({0.0}), 1.0, near, far),
               std::invalid_argument);
  EXPECT_THROW(loglog_slope({1.0, 1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST(Inequalities, UniquenessExamples) {
  const Space line = Space::euclidean(1);
  EXPECT_EQ(uniqueness_certificate(line, Transform::power(2.0), pm(1.0), Point::vec({0.0})), Uniqueness::UniqueByMassNearMean);
  EXPECT_EQ(uniqueness_certificate(line, Transform::huber(1.0), pm(2.0), Point::vec({0.0})), Uniqueness::Inconclusive);
  EXPECT_EQ(uniqueness_certificate(line, Transform::huber(1.0), pm(0.5), Point::vec({0.0})), Uniqueness::UniqueByMassNearMean);
  const Space tri = tripod_space();
  EXPECT_EQ(uniqueness_certificate(tri, Transform::linear(), tripod_leaves(tri), *tri.vertex_point("c")),
            Uniqueness::UniqueByNoBalancedSegment);
  EXPECT_EQ(uniqueness_certificate(tri, Transform::linear(), DiscreteDistribution::point_mass(*tri.vertex_point("a")),
                                   *tri.vertex_point("a")),
            Uniqueness::UniqueByConvexSupport);
  EXPECT_EQ(to_string(Uniqueness::UniqueByNoBalancedSegment), "UniqueByNoBalancedSegment");
}

// An answer other than Inconclusive for the median is only given when the median set is a point.
TEST(InequalitiesProperty, UniquenessCertificatesAreSound) {
  Gen g(44);
  int certified = 0;
  for (int i = 0; i < 400; ++i) {
    const Space s = Space::tree(tfm::testing::random_tree(g, 6));
    std::vector<Atom> atoms;
    const int n = g.integer(1, 6);
    for (int k = 0; k < n; ++k) atoms.push_back({tfm::testing::random_point(g, s), static_cast<double>(g.integer(1, 3))});
    const auto d = DiscreteDistribution::normalized(atoms);
    const Segment set = median_set(s, d);
    const auto u = uniqueness_certificate(s, Transform::linear(), d, set.a);
    if (u != Uniqueness::Inconclusive) {
      EXPECT_LE(set.length, 1e-8);
      ++certified;
    }
  }
  EXPECT_GT(certified, 50);
}

// Every variance inequality holds on random instances across space kinds and transforms.
TEST(InequalitiesProperty, RandomInstancesSatisfyEveryBound) {
  Gen g(45);
  for (auto kind : kKinds)
    for (int i = 0; i < 150; ++i) {
      const Space s = tfm::testing::random_space(g, kind);
      const auto d = tfm::testing::random_distribution(g, s);
      const Transform tau = tfm::testing::random_transform(g);
      const MeanResult mr = frechet_mean(s, tau, d);
      ASSERT_NO_THROW(require_certified(mr, mr.objective));
      const Point m = mr.minimizer;
      const Point q = random_other(g, s, m);
      const auto t = vi_transformed(s, tau, d, m, q);
      EXPECT_TRUE(accepted(t)) << tau.name() << ' ' << t.margin;
      if (tau.first(0.0) == 0.0 && detail::mass_at(s, d, m) == 0.0) {
        // an atom placed at a stationary mean keeps it the mean when tau'(0) = 0
        const auto mixed = d.mixed_with(m, g.uniform(0.05, 0.6));
        EXPECT_TRUE(accepted(vi_pointmass(s, tau, mixed, m, q))) << tau.name();
      }
      if (tau.x0() < kInf && b0_certificate(s, tau, d, m).member) {
        EXPECT_TRUE(accepted(vi_affine_reduction(s, tau, d, m, q).report));
      }

      const MeanResult med = frechet_mean(s, Transform::linear(), d);
      const Point q2 = random_other(g, s, med.minimizer);
      EXPECT_TRUE(accepted(vi_median(s, d, med.minimizer, q2, g.uniform(0.05, 0.99))));
      EXPECT_TRUE(accepted(vi_trivial_median(s, d, med.minimizer, q2)));
      EXPECT_TRUE(accepted(vi_hadamard_mean(s, d, frechet_mean(s, Transform::power(2.0), d).minimizer, q2)));
    }
}

TEST(InequalitiesProperty, MedianOnRandomGeodesics) {
  Gen g(46);
  for (auto kind : kKinds)
    for (int i = 0; i < 200; ++i) {
      const Space s = tfm::testing::random_space(g, kind);
      const Point a = tfm::testing::random_point(g, s), b = tfm::testing::random_point(g, s);
      const Geodesic geo = s.geodesic(a, b);
      if (geo.length() < 0.05) continue;
      std::vector<Atom> atoms;
      const int n = g.integer(1, 12);
      for (int k = 0; k < n; ++k) atoms.push_back({geo.eval(geo.length() * g.uniform()), g.uniform(0.1, 1)});
      const auto d = DiscreteDistribution::normalized(atoms);
      const Segment set = median_set(s, d);
      const Point m = set.length > 0 ? s.geodesic(set.a, set.b).eval(g.uniform() * set.length) : set.a;
      const auto r = vi_median_on_geodesic(s, d, geo, m, tfm::testing::random_point(g, s));
      EXPECT_TRUE(accepted(r)) << tfm::testing::kind_name(kind) << ' ' << r.margin;
    }
}

// With Huber and every atom at least delta from part of the median set, mean set = B0 meet median set.
TEST(InequalitiesProperty, AffineSetIdentityOnRandomTrees) {
  Gen g(47);
  int checked = 0;
  for (int i = 0; i < 8000 && checked < 150; ++i) {
    const Space s = Space::tree(tfm::testing::random_tree(g, 8));
    const auto d = tfm::testing::random_distribution(g, s, 8);
    const Segment med = median_set(s, d);
    double nearest = kInf;
    for (const auto& a : d.atoms()) nearest = std::min(nearest, distance_to_segment(s, a.point, med));
    if (nearest < 0.05) continue;
    const double delta = g.uniform(0.05, 1.0) * nearest;
    const auto r = affine_set_identity(s, Transform::huber(delta), d);
    EXPECT_TRUE(r.satisfied) << r.lhs << ' ' << r.detail;
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(Inequalities, ReportsCarryIdsAndDigests) {
  const Space s = Space::euclidean(1);
  const auto a = vi_transformed(s, Transform::huber(1.0), pm(1.0), Point::vec({0.0}), Point::vec({0.5}));
  const auto b = vi_transformed(s, Transform::huber(1.0), pm(1.0), Point::vec({0.0}), Point::vec({0.5}));
  const auto c = vi_transformed(s, Transform::huber(1.0), pm(1.0), Point::vec({0.0}), Point::vec({0.6}));
  EXPECT_EQ(a.theorem_id, "transformed_mean");
  EXPECT_EQ(a.digest, b.digest);
  EXPECT_NE(a.digest, c.digest);
  EXPECT_EQ(a.margin, a.lhs - a.rhs);
}
