#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tfm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class TransformKind { Power, PowerNormalized, Huber, PseudoHuber, LogCosh, Linear, Conic };

struct TransformDerivatives {
  double value = 0.0;
  double first = 0.0;
  // +inf is the marker for Power(1 < alpha < 2) at x = 0.
  double second_right = 0.0;
  double second_left = 0.0;
};

class Transform;

struct ConicTerm {
  double weight;
  std::vector<Transform> inner;  // exactly one element; vector allows the recursive type
};

/// Nondecreasing convex transformation with concave derivative, normalized to tau(0) = 0
/// and strictly increasing.
class Transform {
 public:
  static Transform power(double alpha) { return Transform(TransformKind::Power, check_alpha(alpha)); }
  /// alpha^{-1} x^alpha
  static Transform power_normalized(double alpha) {
    return Transform(TransformKind::PowerNormalized, check_alpha(alpha));
  }
  static Transform huber(double delta) { return Transform(TransformKind::Huber, check_delta(delta)); }
  static Transform pseudo_huber(double delta) {
    return Transform(TransformKind::PseudoHuber, check_delta(delta));
  }
  static Transform log_cosh() { return Transform(TransformKind::LogCosh, 0.0); }
  static Transform linear() { return Transform(TransformKind::Linear, 0.0); }
  static Transform conic(const std::vector<std::pair<double, Transform>>& terms) {
    Transform t(TransformKind::Conic, 0.0);
    bool any_positive = false;
    for (const auto& [w, inner] : terms) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("conic weight must be finite and >= 0");
      if (w > 0.0) any_positive = true;
      t.terms_.push_back(ConicTerm{w, {inner}});
    }
    if (!any_positive) throw std::invalid_argument("conic combination needs a positive weight");
    return t;
  }

  TransformKind kind() const { return kind_; }
  /// alpha for the power kinds, delta for the Huber kinds, 0 otherwise.
  double param() const { return param_; }
  const std::vector<ConicTerm>& terms() const { return terms_; }

  std::string name() const {
    switch (kind_) {
      case TransformKind::Power: return "power";
      case TransformKind::PowerNormalized: return "power_normalized";
      case TransformKind::Huber: return "huber";
      case TransformKind::PseudoHuber: return "pseudo_huber";
      case TransformKind::LogCosh: return "log_cosh";
      case TransformKind::Linear: return "linear";
      case TransformKind::Conic: return "conic";
    }
    return "unknown";
  }

  double value(double x) const {
    check_x(x);
    switch (kind_) {
      case TransformKind::Power: return std::pow(x, param_);
      case TransformKind::PowerNormalized: return std::pow(x, param_) / param_;
      case TransformKind::Huber: return x <= param_ ? 0.5 * x * x : param_ * (x - 0.5 * param_);
      case TransformKind::PseudoHuber: {
        // delta^2 (sqrt(1 + u^2) - 1) = delta^2 u^2 / (sqrt(1 + u^2) + 1), cancellation-free
        const double u = x / param_;
        return param_ * param_ * u * u / (std::sqrt(1.0 + u * u) + 1.0);
      }
      case TransformKind::LogCosh: {
        if (x < 1.0) {
          const double s = std::sinh(0.5 * x);
          return std::log1p(2.0 * s * s);
        }
        return x + std::log1p(std::exp(-2.0 * x)) - std::log(2.0);
      }
      case TransformKind::Linear: return x;
      case TransformKind::Conic: {
        double s = 0.0;
        for (const auto& t : terms_) s += t.weight * (t.inner[0].value(x) - t.inner[0].value(0.0));
        return s;
      }
    }
    return 0.0;
  }

  double first(double x) const {
    check_x(x);
    switch (kind_) {
      case TransformKind::Power:
        if (param_ == 1.0) return 1.0;
        return x == 0.0 ? 0.0 : param_ * std::pow(x, param_ - 1.0);
      case TransformKind::PowerNormalized:
        if (param_ == 1.0) return 1.0;
        return x == 0.0 ? 0.0 : std::pow(x, param_ - 1.0);
      case TransformKind::Huber: return std::min(x, param_);
      case TransformKind::PseudoHuber: return x / std::sqrt(1.0 + (x / param_) * (x / param_));
      case TransformKind::LogCosh: return std::tanh(x);
      case TransformKind::Linear: return 1.0;
      case TransformKind::Conic: {
        double s = 0.0;
        for (const auto& t : terms_) s += t.weight * t.inner[0].first(x);
        return s;
      }
    }
    return 0.0;
  }

  TransformDerivatives derivs(double x) const {
    TransformDerivatives d;
    d.value = value(x);
    d.first = first(x);
    switch (kind_) {
      case TransformKind::Power:
      case TransformKind::PowerNormalized: {
        const double a = param_;
        const double scale = kind_ == TransformKind::Power ? a : 1.0;
        double s;
        if (a == 1.0) s = 0.0;
        else if (a == 2.0) s = scale;
        else if (x == 0.0) s = kInf;
        else s = scale * (a - 1.0) * std::pow(x, a - 2.0);
        d.second_right = d.second_left = s;
        break;
      }
      case TransformKind::Huber:
        d.second_right = x < param_ ? 1.0 : 0.0;
        d.second_left = x <= param_ ? 1.0 : 0.0;
        break;
      case TransformKind::PseudoHuber: {
        const double u2 = (x / param_) * (x / param_);
        d.second_right = d.second_left = 1.0 / ((1.0 + u2) * std::sqrt(1.0 + u2));
        break;
      }
      case TransformKind::LogCosh: {
        // sech^2 x = 4e / (1 + e)^2 with e = exp(-2x); underflows to 0 past x ~ 372
        const double e = std::exp(-2.0 * x);
        d.second_right = d.second_left = 4.0 * e / ((1.0 + e) * (1.0 + e));
        break;
      }
      case TransformKind::Linear: break;
      case TransformKind::Conic:
        for (const auto& t : terms_) {
          if (t.weight == 0.0) continue;
          const auto inner = t.inner[0].derivs(x);
          d.second_right += t.weight * inner.second_right;
          d.second_left += t.weight * inner.second_left;
        }
        break;
    }
    if (x == 0.0) d.second_left = d.second_right;
    return d;
  }

  double second_right(double x) const { return derivs(x).second_right; }

  /// inf{x > 0 : tau'+(x) = 0}; beyond it tau is affine.
  double x0() const {
    switch (kind_) {
      case TransformKind::Power:
      case TransformKind::PowerNormalized: return param_ == 1.0 ? 0.0 : kInf;
      case TransformKind::Huber: return param_;
      case TransformKind::PseudoHuber:
      case TransformKind::LogCosh: return kInf;
      case TransformKind::Linear: return 0.0;
      case TransformKind::Conic: {
        double m = 0.0;
        for (const auto& t : terms_)
          if (t.weight > 0.0) m = std::max(m, t.inner[0].x0());
        return m;
      }
    }
    return kInf;
  }

  /// Points where tau' or tau'+ is not smooth.
  std::vector<double> kinks() const {
    std::vector<double> k;
    switch (kind_) {
      case TransformKind::Power:
      case TransformKind::PowerNormalized:
        if (param_ > 1.0 && param_ < 2.0) k.push_back(0.0);
        break;
      case TransformKind::Huber: k.push_back(param_); break;
      case TransformKind::Conic:
        for (const auto& t : terms_) {
          if (t.weight == 0.0) continue;
          for (double v : t.inner[0].kinks()) k.push_back(v);
        }
        std::sort(k.begin(), k.end());
        k.erase(std::unique(k.begin(), k.end()), k.end());
        break;
      default: break;
    }
    return k;
  }

  bool operator==(const Transform& o) const {
    if (kind_ != o.kind_ || param_ != o.param_ || terms_.size() != o.terms_.size()) return false;
    for (std::size_t i = 0; i < terms_.size(); ++i)
      if (terms_[i].weight != o.terms_[i].weight || !(terms_[i].inner[0] == o.terms_[i].inner[0])) return false;
    return true;
  }

 private:
  Transform(TransformKind k, double p) : kind_(k), param_(p) {}

  static double check_alpha(double a) {
    if (!(a >= 1.0 && a <= 2.0)) throw std::invalid_argument("power exponent must lie in [1, 2]");
    return a;
  }
  static double check_delta(double d) {
    if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument("delta must be positive and finite");
    return d;
  }
  static void check_x(double x) {
    if (!(x >= 0.0)) throw std::domain_error("transform argument must be nonnegative");
  }

  TransformKind kind_;
  double param_;
  std::vector<ConicTerm> terms_;
};

inline double tau_eval(const Transform& t, double x) { return t.value(x); }
inline TransformDerivatives tau_derivs(const Transform& t, double x) { return t.derivs(x); }
inline double x0_threshold(const Transform& t) { return t.x0(); }

/// Bisection for the first zero of tau'+ on (0, hi]; +inf when tau'+(hi) > 0.
/// Only meaningful where tau'+ does not underflow before hi (log_cosh underflows near 372).
inline double x0_threshold_bisection(const Transform& t, double hi = 1e6) {
  if (t.second_right(hi) > 0.0) return kInf;
  double lo = 0.0;
  if (t.second_right(0.0) == 0.0) return 0.0;
  for (int i = 0; i < 400 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (t.second_right(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

}  // namespace tfm
