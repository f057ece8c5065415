// Huber means of a symmetric two-point law on the line: unique for z < delta, a segment for z > delta.

#include <algorithm>
#include <cstdio>

#include "tfm/inequalities.hpp"

int main() {
  using namespace tfm;
  const Space line = Space::euclidean(1);
  const Transform huber = Transform::huber(1.0);
  for (double z : {0.5, 2.0}) {
    const DiscreteDistribution y({{Point::vec({z}), 0.5}, {Point::vec({-z}), 0.5}});
    const Segment means = mean_set(line, huber, y);
    const Segment medians = median_set(line, y);
    auto lo = [](const Segment& g) { return std::min(g.a.coords()[0], g.b.coords()[0]); };
    auto hi = [](const Segment& g) { return std::max(g.a.coords()[0], g.b.coords()[0]); };
    std::printf("z = %.1f: Huber mean set [%g, %g], median set [%g, %g]\n", z, lo(means), hi(means), lo(medians),
                hi(medians));
    std::printf("  q      F(q)        reference\n");
    for (double q : {0.25, 1.0, 2.5, 4.0}) {
      const double f = variance_functional(line, huber, y, Point::vec({q}), Point::vec({0.0}));
      std::printf("  %-5g  %-10.6g  %-10.6g\n", q, f, huber_reference_functional(z, 1.0, q));
    }
  }
}
