#include "archsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "archsim/errors.hpp"
#include "archsim/rng.hpp"

namespace archsim::stats {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
  if (x.size() < 3) throw ValidationError("correlation needs at least three points");
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = ranks(x), ry = ranks(y);
  return pearson(rx, ry);
}

double correlation_p_value(double r, std::size_t n) {
  if (std::isnan(r) || n < 3) return std::numeric_limits<double>::quiet_NaN();
  if (std::fabs(r) >= 1.0) return 0.0;
  const double dof = static_cast<double>(n - 2);
  const double t = r * std::sqrt(dof / (1.0 - r * r));
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

Correlation pearson_test(std::span<const double> x, std::span<const double> y) {
  Correlation c;
  c.coefficient = pearson(x, y);
  c.n = x.size();
  c.p_value = correlation_p_value(c.coefficient, c.n);
  return c;
}

Correlation spearman_test(std::span<const double> x, std::span<const double> y) {
  Correlation c;
  c.coefficient = spearman(x, y);
  c.n = x.size();
  c.p_value = correlation_p_value(c.coefficient, c.n);
  return c;
}

double pearson_permutation_p(std::span<const double> x, std::span<const double> y, int repeats, std::uint64_t seed) {
  const double observed = std::fabs(pearson(x, y));
  if (std::isnan(observed)) return std::numeric_limits<double>::quiet_NaN();
  Rng rng(seed, "permutation-test");
  std::vector<double> shuffled(y.begin(), y.end());
  int hits = 0;
  for (int r = 0; r < repeats; ++r) {
    rng.shuffle(shuffled);
    if (std::fabs(pearson(x, shuffled)) >= observed - 1e-12) ++hits;
  }
  return (hits + 1.0) / (repeats + 1.0);
}

}  // namespace archsim::stats
