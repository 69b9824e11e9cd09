#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace archsim::stats {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(std::span<const double> x);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> ranks(std::span<const double> x);

/// NaN when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct Correlation {
  double coefficient = 0.0;
  double p_value = 1.0;  // two-sided, t-approximation with n - 2 dof
  std::size_t n = 0;
};

Correlation pearson_test(std::span<const double> x, std::span<const double> y);
Correlation spearman_test(std::span<const double> x, std::span<const double> y);

/// Two-sided p-value for a correlation coefficient under the t
/// approximation t = r sqrt((n-2)/(1-r^2)).
double correlation_p_value(double r, std::size_t n);

/// Two-sided permutation p-value for Pearson: fraction of `repeats` seeded
/// shuffles of y whose |r| reaches the observed |r| (add-one smoothed).
double pearson_permutation_p(std::span<const double> x, std::span<const double> y, int repeats, std::uint64_t seed);

}  // namespace archsim::stats
