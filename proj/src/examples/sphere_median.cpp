// Monte Carlo median variance inequality for the uniform law on a sphere of radius sqrt(k) in R^k.

#include <cmath>
#include <cstdio>

#include "tfm/means.hpp"

int main() {
  using namespace tfm;
  const int k = 50;
  const Space s = Space::euclidean(k);
  const Sampler sphere = Sampler::uniform_sphere(k, std::sqrt(double(k)), 2024);
  const Transform lin = Transform::linear();
  const Point origin = Point::vec(Vec::Zero(k));
  for (double r : {1.0, 2.0, 4.0, std::sqrt(double(k))}) {
    const Point q = Point::vec(Vec(r * Vec::Unit(k, 0)));
    const McEstimate e = variance_functional_mc(s, lin, sphere, q, origin, 100000);
    std::printf("|q| = %-8.4g  E[d(Y,q) - d(Y,0)] = %.6f +- %.6f   ratio to |q|^2/sqrt(k): %.4f\n", r, e.estimate,
                e.std_error, e.estimate / (r * r / std::sqrt(double(k))));
  }
}
