#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/util.hpp"

namespace sensindex {

// Standard normal CDF via erf; |error| < 1e-15 (erf is correctly rounded-ish
// in libm), well inside the documented 1e-7 contract.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Inverse standard normal CDF, Acklam's rational approximation with one
// Halley refinement step. Raw approximation |error| < 1.2e-9; the refinement
// brings it to ~1e-15, inside the documented 1e-8 contract.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidLevel("normal_quantile: p must lie in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step on f(x) = Phi(x) - p.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

// One-sample Kolmogorov-Smirnov distance sup_x |F_n(x) - F(x)| against an
// arbitrary CDF.
inline double ks_distance(std::span<const double> values, const std::function<double(double)>& cdf) {
  if (values.empty()) throw TooFewValues("ks_distance: empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max(d, std::max((static_cast<double>(i) + 1.0) / n - f,
                             f - static_cast<double>(i) / n));
  }
  return d;
}

inline double ks_distance_to_normal(std::span<const double> values) {
  return ks_distance(values, [](double x) { return normal_cdf(x); });
}

// Asymptotic one-sample KS critical value at level alpha: D_crit =
// sqrt(-ln(alpha/2)/2) / sqrt(n) (Kolmogorov limit distribution, one-term
// inversion; 1.3581/sqrt(n) at 5%, 1.6276/sqrt(n) at 1%).
inline double ks_critical_value(double alpha, std::size_t n) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidLevel("ks_critical_value: alpha in (0,1)");
  return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(static_cast<double>(n));
}

inline double sample_skewness(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double m = mean_of(v);
  std::vector<double> d2(v.size()), d3(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - m;
    d2[i] = d * d;
    d3[i] = d * d * d;
  }
  const double s2 = pairwise_sum(d2) / n;
  if (s2 <= 0.0) return 0.0;
  return (pairwise_sum(d3) / n) / std::pow(s2, 1.5);
}

inline double sample_excess_kurtosis(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double m = mean_of(v);
  std::vector<double> d2(v.size()), d4(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - m;
    d2[i] = d * d;
    d4[i] = d * d * d * d;
  }
  const double s2 = pairwise_sum(d2) / n;
  if (s2 <= 0.0) return 0.0;
  return (pairwise_sum(d4) / n) / (s2 * s2) - 3.0;
}

// Two-sample two-dimensional empirical-CDF discrepancy:
// max over query points q (union of both samples) of |F1_n(q) - F2_m(q)|,
// with F_n(q) = (1/n) #{i : a_i <= q_x and b_i <= q_y}.
inline double ecdf2d_max_deviation(std::span<const double> x1, std::span<const double> y1,
                                   std::span<const double> x2, std::span<const double> y2) {
  const std::size_t n1 = x1.size(), n2 = x2.size();
  auto ecdf = [](std::span<const double> xs, std::span<const double> ys, double qx, double qy) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (xs[i] <= qx && ys[i] <= qy) ++c;
    return static_cast<double>(c) / static_cast<double>(xs.size());
  };
  double d = 0.0;
  for (std::size_t i = 0; i < n1; ++i)
    d = std::max(d, std::abs(ecdf(x1, y1, x1[i], y1[i]) - ecdf(x2, y2, x1[i], y1[i])));
  for (std::size_t i = 0; i < n2; ++i)
    d = std::max(d, std::abs(ecdf(x1, y1, x2[i], y2[i]) - ecdf(x2, y2, x2[i], y2[i])));
  return d;
}

}  // namespace sensindex
