#include "archsim/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "archsim/errors.hpp"

namespace archsim::linalg {

Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, std::vector<double>(cols, 0.0)); }

EigenDecomposition symmetric_eigen(const Matrix& input) {
  const std::size_t n = input.size();
  for (const auto& row : input)
    if (row.size() != n) throw ValidationError("eigendecomposition needs a square matrix");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (input[i][j] != input[j][i]) throw ValidationError("eigendecomposition needs a symmetric matrix");

  Matrix a = input;
  Matrix v = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  double total = 0.0;
  for (const auto& row : a)
    for (double x : row) total += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off <= 1e-30 * total || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p][q];
        if (apq == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        a[p][q] = a[q][p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i][i] > a[j][j]; });
  EigenDecomposition out;
  out.vectors = zeros(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.values.push_back(a[src][src]);
    std::size_t big = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::fabs(v[i][src]) > std::fabs(v[big][src])) big = i;
    const double sign = v[big][src] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out.vectors[i][k] = sign * v[i][src];
  }
  return out;
}

double eigen_residual(const Matrix& a, const EigenDecomposition& e, std::size_t k) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double av = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) av += a[i][j] * e.vectors[j][k];
    worst = std::max(worst, std::fabs(av - e.values[k] * e.vectors[i][k]));
  }
  return worst;
}

}  // namespace archsim::linalg
