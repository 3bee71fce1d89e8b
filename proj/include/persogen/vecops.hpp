#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace persogen {

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// zero vectors stay zero
inline void l2_normalize(std::vector<double>& v) {
  const double n = l2_norm(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean_of: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// population standard deviation
inline double stddev_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size()));
}

}  // namespace persogen
