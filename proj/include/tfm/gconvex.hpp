#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/transforms.hpp"

namespace tfm {

/// t -> sqrt((t - t0)^2 + h^2)
struct GFun {
  double t0 = 0.0;
  double h = 0.0;

  double operator()(double t) const { return std::hypot(t - t0, h); }
  /// Derivative; at the apex of h = 0 this returns the right derivative +1.
  double slope(double t) const {
    const double v = (*this)(t);
    return v == 0.0 ? 1.0 : (t - t0) / v;
  }
};

inline double gfun_eval(const GFun& g, double t) { return g(t); }

/// The unique member of G through (t1, x1) and (t2, x2), or nullopt when
/// |x1 - x2| <= |t2 - t1| <= x1 + x2 fails (relative slack 1e-12).
inline std::optional<GFun> gfun_through_two_points(double t1, double x1, double t2, double x2) {
  if (t1 == t2) throw std::domain_error("gfun_through_two_points: t1 == t2");
  if (x1 < 0.0 || x2 < 0.0) throw std::domain_error("gfun_through_two_points: negative value");
  const double delta = t2 - t1;
  const double ad = std::abs(delta);
  const double diff = std::abs(x1 - x2);
  const double sum = x1 + x2;
  const double slack = 1e-12 * std::max({ad, sum, 1e-300});
  if (diff > ad + slack || ad > sum + slack) return std::nullopt;

  GFun g;
  // (t2^2 - t1^2 + x1^2 - x2^2) / (2 delta), written around the midpoint
  g.t0 = 0.5 * (t1 + t2) + (x1 - x2) * (x1 + x2) / (2.0 * delta);
  if (ad >= sum - slack || ad <= diff + slack) {
    g.h = 0.0;
    return g;
  }
  // 4 delta^2 h^2 = ((x1 + x2)^2 - delta^2) (delta^2 - (x1 - x2)^2)
  const double a = (sum - ad) * (sum + ad);
  const double b = (ad - diff) * (ad + diff);
  g.h = std::sqrt(std::max(0.0, a * b)) / (2.0 * ad);
  return g;
}

/// Member of G touching value f_t0 at t0 with one-sided slope v0.
inline GFun gtangent(double f_t0, double v0, double t0) {
  if (!(std::abs(v0) <= 1.0)) throw std::domain_error("gtangent: |v0| > 1");
  if (!(f_t0 >= 0.0)) throw std::domain_error("gtangent: negative value");
  GFun g;
  g.t0 = t0 - f_t0 * v0;
  g.h = std::sqrt(std::max(0.0, (1.0 - v0) * (1.0 + v0))) * f_t0;
  return g;
}

struct Profile {
  std::vector<double> grid;
  std::vector<double> values;
  // Optional; empty when not supplied.
  std::vector<double> right_slopes;
  std::vector<double> left_slopes;
};

struct GConvexReport {
  double tangent_margin = kInf;    // min over tangents and other grid points of f - g
  double lipschitz_excess = 0.0;   // max of |f_i - f_j| / |t_i - t_j| - 1 over neighbours
  double pair_margin = kInf;       // min of f_i + f_j - |t_i - t_j|
  double min_value = kInf;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Necessary-condition check of G-convexity on a sampled profile. Without supplied
/// slopes the tangent at t_i is the G-interpolant through the neighbouring sample.
inline GConvexReport check_gconvex(const Profile& p, double tol = 1e-8) {
  const std::size_t n = p.grid.size();
  if (n < 3 || p.values.size() != n) throw std::invalid_argument("check_gconvex: need >= 3 samples");
  for (std::size_t i = 1; i < n; ++i)
    if (!(p.grid[i] > p.grid[i - 1])) throw std::invalid_argument("check_gconvex: grid not strictly increasing");
  const bool have_right = p.right_slopes.size() == n;
  const bool have_left = p.left_slopes.size() == n;

  GConvexReport r;
  for (std::size_t i = 0; i < n; ++i) r.min_value = std::min(r.min_value, p.values[i]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dt = p.grid[i + 1] - p.grid[i];
    r.lipschitz_excess = std::max(r.lipschitz_excess, std::abs(p.values[i + 1] - p.values[i]) / dt - 1.0);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      r.pair_margin = std::min(r.pair_margin, p.values[i] + p.values[j] - (p.grid[j] - p.grid[i]));

  auto test_tangent = [&](const GFun& g, std::size_t i, std::size_t skip) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || j == skip) continue;
      const double m = p.values[j] - g(p.grid[j]);
      if (m < r.tangent_margin) {
        r.tangent_margin = m;
        r.worst_index = i;
      }
    }
  };
  bool infeasible = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (have_right && i + 1 < n) test_tangent(gtangent(p.values[i], std::clamp(p.right_slopes[i], -1.0, 1.0), p.grid[i]), i, n);
    if (have_left && i > 0) test_tangent(gtangent(p.values[i], std::clamp(p.left_slopes[i], -1.0, 1.0), p.grid[i]), i, n);
    if (!have_right && i + 1 < n) {
      const auto g = gfun_through_two_points(p.grid[i], p.values[i], p.grid[i + 1], p.values[i + 1]);
      if (!g) {
        infeasible = true;
        r.worst_index = i;
      } else {
        test_tangent(*g, i, i + 1);
      }
    }
  }
  const double scale = 1.0 + r.min_value;
  r.passed = !infeasible && r.min_value >= 0.0 && r.lipschitz_excess <= tol &&
             r.pair_margin >= -tol * scale && r.tangent_margin >= -tol * scale;
  if (infeasible) r.tangent_margin = -kInf;
  return r;
}

/// Lower bound on f(t) - f(0) for a G-convex f from f(0), f(t), f'+(0) and f'-(t).
inline double semitaylor_median_bound(double f0, double f_t, double v_plus0, double v_minus_t, double t) {
  if (t == 0.0) throw std::domain_error("semitaylor_median_bound: t == 0");
  if (!(std::abs(v_plus0) <= 1.0) || !(std::abs(v_minus_t) <= 1.0))
    throw std::domain_error("semitaylor_median_bound: slopes must lie in [-1, 1]");
  const double f = std::max(f0, f_t);
  if (!(f > 0.0)) throw std::domain_error("semitaylor_median_bound: max(f0, f_t) must be positive");
  const double v2 = std::max(v_plus0 * v_plus0, v_minus_t * v_minus_t);
  return t * v_plus0 + 0.5 * t * t * (1.0 - v2) / f;
}

/// Lower bound on tau(f(t)) - tau(f(0)); comp_slope0 is the one-sided derivative of tau o f at 0 towards t.
inline double semitaylor_transformed_bound(const Transform& tau, double f0, double f_t, double comp_slope0, double t) {
  if (t == 0.0) throw std::domain_error("semitaylor_transformed_bound: t == 0");
  const double c = tau.second_right(std::max(f0, f_t));
  return t * comp_slope0 + 0.5 * t * t * c;
}

/// f''(s) >= (1 - f'(s)^2) / f(s) for G-convex f.
inline double second_deriv_floor(double f_s, double fprime_s) {
  if (!(f_s > 0.0)) throw std::domain_error("second_deriv_floor: f(s) must be positive");
  if (!(std::abs(fprime_s) <= 1.0)) throw std::domain_error("second_deriv_floor: |f'(s)| > 1");
  return (1.0 - fprime_s * fprime_s) / f_s;
}

/// lambda f(x)^2 + (1 - lambda) f(y)^2 - lambda (1 - lambda)(x - y)^2 - f(lambda x + (1 - lambda) y)^2
inline double strong_convexity_margin(double fx, double fy, double f_mid, double x, double y, double lambda) {
  return lambda * fx * fx + (1.0 - lambda) * fy * fy - lambda * (1.0 - lambda) * (x - y) * (x - y) - f_mid * f_mid;
}

inline void write_profile_csv(std::ostream& os, const Profile& p) {
  os << "t,f\n";
  char buf[64];
  for (std::size_t i = 0; i < p.grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.grid[i], p.values[i]);
    os << buf;
  }
}

inline Profile read_profile_csv(std::istream& is) {
  Profile p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("profile csv line " + std::to_string(lineno) + ": expected t,f");
    const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
    if (lineno == 1 && a == "t") continue;
    try {
      std::size_t pa = 0, pb = 0;
      const double t = std::stod(a, &pa), f = std::stod(b, &pb);
      if (pa != a.size() || pb != b.size()) throw std::invalid_argument("trailing characters");
      p.grid.push_back(t);
      p.values.push_back(f);
    } catch (const std::exception&) {
      throw std::invalid_argument("profile csv line " + std::to_string(lineno) + ": not a number pair");
    }
  }
  return p;
}

}  // namespace tfm
