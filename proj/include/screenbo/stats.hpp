#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace screenbo {

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (n-1 denominator).
inline double sd_of(const std::vector<double>& v) {
  const auto n = v.size();
  if (n < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(n - 1));
}

inline double standard_error_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return sd_of(v) / std::sqrt(static_cast<double>(v.size()));
}

// Median of an unsorted sample; averages the two central order statistics for
// even sizes. Copies the input.
inline double median_of(std::vector<double> v) {
  const auto n = v.size();
  const auto mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  const double hi = v[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace screenbo
