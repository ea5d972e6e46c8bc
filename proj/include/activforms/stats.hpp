#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "activforms/diag.hpp"

namespace activforms {

struct SampleStats {
  double mean = 0;
  double sd = 0;    // sample standard deviation (n-1)
  double sem = 0;
  double rsem_percent = 0;
  bool zero_mean = false;
  size_t n = 0;
};

inline SampleStats compute_sample_stats(const std::vector<double>& samples) {
  SampleStats s;
  s.n = samples.size();
  if (s.n == 0) return s;
  double sum = 0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0;
    for (double v : samples) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.sem = s.sd / std::sqrt(static_cast<double>(s.n));
  }
  if (s.mean == 0) {
    s.zero_mean = true;
    s.rsem_percent = 0;
  } else {
    s.rsem_percent = 100.0 * s.sem / std::fabs(s.mean);
  }
  return s;
}

/// RSEM as a percentage: 100 * SEM / |mean|; zero-mean inputs are flagged via
/// SampleStats when the full record is needed.
inline double compute_rsem(const std::vector<double>& samples) {
  if (samples.size() < 2)
    throw Error(Error::Kind::DomainError, "RSEM needs at least two samples");
  return compute_sample_stats(samples).rsem_percent;
}

/// Chernoff-Hoeffding run count: N = ceil(ln(2/alpha) / (2 eps^2)).
inline int64_t required_runs_chernoff(double epsilon, double alpha) {
  if (!(epsilon > 0 && epsilon < 1) || !(alpha > 0 && alpha < 1))
    throw Error(Error::Kind::DomainError, "epsilon and alpha must lie in (0,1)");
  return static_cast<int64_t>(std::ceil(std::log(2.0 / alpha) / (2.0 * epsilon * epsilon)));
}

/// Inverse standard normal CDF (Acklam's rational approximation).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0 && p < 1)) throw Error(Error::Kind::DomainError, "p must lie in (0,1)");
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
  const double plow = 0.02425;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > 1 - plow) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

struct WilsonInterval {
  double lo = 0, hi = 1;
  double width() const { return hi - lo; }
  bool contains(double p) const { return p >= lo && p <= hi; }
};

/// Wilson score interval for a binomial proportion at confidence 1 - alpha.
inline WilsonInterval wilson_interval(int64_t successes, int64_t n, double alpha) {
  WilsonInterval w;
  if (n <= 0) return w;
  double z = inverse_normal_cdf(1.0 - alpha / 2.0);
  double phat = static_cast<double>(successes) / static_cast<double>(n);
  double z2 = z * z;
  double denom = 1.0 + z2 / static_cast<double>(n);
  double center = (phat + z2 / (2.0 * static_cast<double>(n))) / denom;
  double half = z *
                std::sqrt(phat * (1.0 - phat) / static_cast<double>(n) +
                          z2 / (4.0 * static_cast<double>(n) * static_cast<double>(n))) /
                denom;
  w.lo = std::max(0.0, center - half);
  w.hi = std::min(1.0, center + half);
  return w;
}

struct Quartiles {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

inline Quartiles compute_quartiles(std::vector<double> values) {
  Quartiles q;
  if (values.empty()) return q;
  std::sort(values.begin(), values.end());
  auto at = [&](double frac) {
    double idx = frac * static_cast<double>(values.size() - 1);
    size_t lo = static_cast<size_t>(idx);
    size_t hi = std::min(lo + 1, values.size() - 1);
    double t = idx - static_cast<double>(lo);
    return values[lo] * (1 - t) + values[hi] * t;
  };
  q.min = values.front();
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  q.max = values.back();
  return q;
}

} // namespace activforms
