#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace svelift {

/// Mean, unbiased sample variance, and standard error of a sample.
struct Summary {
  double mean = 0.0;
  double variance = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  s.n = xs.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : xs) {
      const double d = x - s.mean;
      ss += d * d;
    }
    s.variance = ss / static_cast<double>(s.n - 1);
    s.se = std::sqrt(s.variance / static_cast<double>(s.n));
  }
  return s;
}

}  // namespace svelift
