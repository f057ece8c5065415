// Median sets in the stick figure (a disk glued to a metric tree at the neck).

#include <cstdio>
#include <string>
#include <vector>

#include "tfm/inequalities.hpp"

int main() {
  using namespace tfm;
  const Space s = Space::stickfigure();
  auto at = [&](const char* name) { return s.named_point(name).value(); };
  const std::vector<std::pair<std::string, DiscreteDistribution>> cases = {
      {"single atom at bodyCenter", DiscreteDistribution::point_mass(at("bodyCenter"))},
      {"1/2 at bodyTop, 1/2 at bodyCenter", DiscreteDistribution({{at("bodyTop"), 0.5}, {at("bodyCenter"), 0.5}})},
      {"head center and body bottom", DiscreteDistribution({{at("headCenter"), 0.5}, {at("bodyBottom"), 0.5}})},
      {"torso ends and arms", DiscreteDistribution::normalized({{at("bodyTop"), 3.0},
                                                                {at("bodyBottom"), 3.0},
                                                                {at("leftArmOuter"), 2.0},
                                                                {at("rightArmOuter"), 1.0}})}};
  for (const auto& [label, y] : cases) {
    const Segment m = median_set(s, y);
    const auto a = *s.embed_2d(m.a), b = *s.embed_2d(m.b);
    std::printf("%-36s median set (%g, %g) -- (%g, %g), length %g", label.c_str(), a[0], a[1], b[0], b[1], m.length);
    if (m.length > 0.0) {
      const auto lr = left_right_mass(s, y, s.geodesic(m.a, m.b));
      std::printf(", L = %g, R = %g", lr.left, lr.right);
    }
    std::printf("\n");
  }
}
