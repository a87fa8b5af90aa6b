#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "esmaml/errors.hpp"

namespace esmaml::stats {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double std_dev = 0.0;  // sample (n - 1) standard deviation; 0 when n < 2

  double std_error() const {
    return n > 0 ? std_dev / std::sqrt(static_cast<double>(n)) : 0.0;
  }
};

/// Two-pass mean and sample standard deviation.
inline Moments moments(std::span<const double> xs) {
  Moments m;
  m.n = xs.size();
  if (m.n == 0) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n < 2) return m;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std_dev = std::sqrt(ss / static_cast<double>(m.n - 1));
  return m;
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Two-sided Student-t confidence interval for the mean.
inline Interval confidence_interval(const Moments& m, double level = 0.95) {
  if (m.n < 2) return {m.mean, m.mean};
  boost::math::students_t t(static_cast<double>(m.n - 1));
  const double q = boost::math::quantile(t, 0.5 + 0.5 * level);
  const double h = q * m.std_error();
  return {m.mean - h, m.mean + h};
}

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Welch's t-test of H1: mean(a) > mean(b).
inline TestResult welch_greater(const Moments& a, const Moments& b) {
  if (a.n < 2 || b.n < 2) throw ParameterError("welch_greater: need n >= 2 per sample");
  const double va = a.std_dev * a.std_dev / static_cast<double>(a.n);
  const double vb = b.std_dev * b.std_dev / static_cast<double>(b.n);
  TestResult r;
  const double se = std::sqrt(va + vb);
  if (se == 0.0) {
    r.statistic = a.mean > b.mean   ? std::numeric_limits<double>::infinity()
                  : a.mean < b.mean ? -std::numeric_limits<double>::infinity()
                                    : 0.0;
    r.df = static_cast<double>(a.n + b.n - 2);
    r.p_value = a.mean > b.mean ? 0.0 : 1.0;
    return r;
  }
  r.statistic = (a.mean - b.mean) / se;
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.n - 1) + vb * vb / static_cast<double>(b.n - 1));
  boost::math::students_t t(r.df);
  r.p_value = boost::math::cdf(boost::math::complement(t, r.statistic));
  return r;
}

inline TestResult welch_greater(std::span<const double> a, std::span<const double> b) {
  return welch_greater(moments(a), moments(b));
}

/// Paired one-sided t-test of H1: mean(a - b) > 0.
inline TestResult paired_greater(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ParameterError("paired_greater: need equal sizes >= 2");
  }
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const Moments m = moments(diff);
  TestResult r;
  r.df = static_cast<double>(m.n - 1);
  const double se = m.std_error();
  if (se == 0.0) {
    r.statistic = m.mean > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p_value = m.mean > 0 ? 0.0 : 1.0;
    return r;
  }
  r.statistic = m.mean / se;
  boost::math::students_t t(r.df);
  r.p_value = boost::math::cdf(boost::math::complement(t, r.statistic));
  return r;
}

}  // namespace esmaml::stats
