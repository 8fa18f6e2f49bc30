#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dsd::stats {

double mean(std::span<const double> xs);
/// Sample standard deviation (n-1 denominator); 0 for n < 2.
double sample_std(std::span<const double> xs);
/// Standard error of the mean: sample_std / sqrt(n).
double standard_error(std::span<const double> xs);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least-squares line through (x, y).
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace dsd::stats
