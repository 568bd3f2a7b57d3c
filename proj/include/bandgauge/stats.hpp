#pragma once

#include <cmath>
#include <limits>
#include <span>

#include "error.hpp"

namespace bandgauge::stats {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  fail_numeric("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  require(a > 0 && b > 0, "incomplete_beta: shape parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

// P(T > t) for Student's t with dof degrees of freedom.
inline double student_t_upper_tail(double t, double dof) {
  const double x = dof / (dof + t * t);
  const double half = 0.5 * incomplete_beta(dof / 2.0, 0.5, x);
  return t >= 0 ? half : 1.0 - half;
}

inline double student_t_cdf(double t, double dof) { return 1.0 - student_t_upper_tail(t, dof); }

namespace detail {

// Bisection for a decreasing function f on [lo, inf) crossing zero; hi is grown until bracketed.
template <class F>
double bisect_decreasing(F f, double lo, double hi, double abs_tol) {
  int grow = 0;
  while (f(hi) > 0) {
    lo = hi;
    hi *= 2.0;
    if (++grow > 200) fail_numeric("quantile search failed to bracket");
  }
  while (hi - lo > abs_tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// t such that P(T > t) = upper_prob, to absolute tolerance abs_tol.
inline double student_t_upper_quantile(double upper_prob, double dof, double abs_tol = 1e-10) {
  require(upper_prob > 0 && upper_prob < 0.5, "t quantile: probability must lie in (0, 0.5)");
  require(dof > 0, "t quantile: dof must be positive");
  return detail::bisect_decreasing([&](double t) { return student_t_upper_tail(t, dof) - upper_prob; }, 0.0, 1.0,
                                   abs_tol);
}

// P(F <= f) for the F distribution with (d1, d2) dof.
inline double f_cdf(double f, double d1, double d2) {
  if (f <= 0) return 0.0;
  return incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2));
}

// f such that P(F <= f) = prob.
inline double f_quantile(double prob, double d1, double d2, double abs_tol = 1e-12) {
  require(prob > 0 && prob < 1, "F quantile: probability must lie in (0, 1)");
  return detail::bisect_decreasing([&](double f) { return prob - f_cdf(f, d1, d2); }, 0.0, 1.0, abs_tol);
}

inline double mean(std::span<const double> v) {
  require(!v.empty(), "mean of empty sample");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample variance with the n-1 denominator.
inline double sample_variance(std::span<const double> v) {
  require(v.size() >= 2, "sample variance needs at least two values");
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Population variance with the n denominator.
inline double population_variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace bandgauge::stats
