#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <set>

#include "archsim/errors.hpp"
#include "archsim/linalg.hpp"
#include "archsim/rng.hpp"
#include "archsim/spectral/spectral.hpp"

using namespace archsim;
using linalg::Matrix;
namespace fs = std::filesystem;

namespace {

Matrix random_symmetric(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, "sym");
  Matrix m = linalg::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m[i][j] = m[j][i] = rng.uniform(-1.0, 1.0);
  return m;
}

// Blocks of the given sizes: within-block weight `in` plus jitter, across `out`.
Matrix planted(const std::vector<std::size_t>& sizes, double in, double out, std::uint64_t seed,
               std::vector<int>* truth = nullptr) {
  std::vector<int> block;
  for (std::size_t b = 0; b < sizes.size(); ++b) block.insert(block.end(), sizes[b], static_cast<int>(b));
  const std::size_t n = block.size();
  Rng rng(seed, "planted");
  Matrix a = linalg::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      a[i][j] = a[j][i] = block[i] == block[j] ? in + rng.uniform(0.0, 0.05) : out;
  if (truth) *truth = block;
  return a;
}

bool same_partition(const std::vector<int>& x, const std::vector<int>& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if ((x[i] == x[j]) != (y[i] == y[j])) return false;
  return true;
}

std::vector<std::string> names_of(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("m" + std::to_string(i));
  return v;
}

}  // namespace

TEST_CASE("jacobi agrees with a reference eigensolver") {
  for (std::size_t n : {1u, 2u, 5u, 12u, 30u}) {
    const Matrix m = random_symmetric(n, n);
    const auto e = linalg::symmetric_eigen(m);
    Eigen::MatrixXd ref(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) ref(i, j) = m[i][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(ref);
    const auto& vals = solver.eigenvalues();  // ascending
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(e.values[k] == doctest::Approx(vals(static_cast<Eigen::Index>(n - 1 - k))).epsilon(1e-10));
      CHECK(linalg::eigen_residual(m, e, k) < 1e-9);
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += e.vectors[i][a] * e.vectors[i][b];
        CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
      }
  }
}

TEST_CASE("jacobi is bit-reproducible and sign-canonical") {
  const Matrix m = random_symmetric(9, 4);
  const auto a = linalg::symmetric_eigen(m);
  const auto b = linalg::symmetric_eigen(m);
  CHECK(a.values == b.values);
  CHECK(a.vectors == b.vectors);
  for (std::size_t k = 0; k < 9; ++k) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < 9; ++i)
      if (std::abs(a.vectors[i][k]) > std::abs(a.vectors[arg][k])) arg = i;
    CHECK(a.vectors[arg][k] > 0.0);
  }
}

TEST_CASE("planted two-block adjacency is recovered exactly") {
  std::vector<int> truth;
  const Matrix a = planted({5, 7}, 1.0, 0.02, 1, &truth);
  spectral::ClusterConfig cfg;
  cfg.k = 2;
  const auto c = spectral::spectral_cluster(a, names_of(12), cfg);
  CHECK(c.labels == truth);
  CHECK(spectral::cluster_purity(c.labels, {"x", "x", "x", "x", "x", "y", "y", "y", "y", "y", "y", "y"}) == 1.0);
}

TEST_CASE("disconnected blocks give a unit eigenvalue per block") {
  Matrix a = planted({4, 4, 3}, 1.0, 0.0, 2);
  spectral::ClusterConfig cfg;
  cfg.k = 3;
  const auto c = spectral::spectral_cluster(a, names_of(11), cfg);
  for (double v : c.eigenvalues) CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::set<int>(c.labels.begin(), c.labels.end()).size() == 3);
}

TEST_CASE("clustering is invariant to adjacency scale") {
  const Matrix a = planted({4, 5, 3}, 0.8, 0.1, 3);
  spectral::ClusterConfig cfg;
  cfg.k = 3;
  const auto base = spectral::spectral_cluster(a, names_of(12), cfg);
  for (double s : {0.25, 16.0, 1024.0}) {
    Matrix b = a;
    for (auto& row : b)
      for (auto& v : row) v *= s;
    const auto c = spectral::spectral_cluster(b, names_of(12), cfg);
    CHECK(c.labels == base.labels);
    CHECK(c.embedding == base.embedding);
  }
  Matrix b = a;
  for (auto& row : b)
    for (auto& v : row) v *= 3.7;
  CHECK(spectral::spectral_cluster(b, names_of(12), cfg).labels == base.labels);
}

TEST_CASE("clustering is equivariant to node permutation") {
  const Matrix a = planted({4, 5, 3}, 0.8, 0.1, 5);
  const auto names = names_of(12);
  spectral::ClusterConfig cfg;
  cfg.k = 3;
  const auto base = spectral::spectral_cluster(a, names, cfg);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto perm = Rng(seed, "perm").permutation(12);
    Matrix b = linalg::zeros(12, 12);
    std::vector<std::string> pn(12);
    for (std::size_t i = 0; i < 12; ++i) {
      pn[i] = names[perm[i]];
      for (std::size_t j = 0; j < 12; ++j) b[i][j] = a[perm[i]][perm[j]];
    }
    const auto c = spectral::spectral_cluster(b, pn, cfg);
    std::vector<int> back(12);
    for (std::size_t i = 0; i < 12; ++i) back[perm[i]] = c.labels[i];
    CHECK(same_partition(back, base.labels));
  }
}

TEST_CASE("clustering is deterministic under threads and seed") {
  const Matrix a = planted({3, 3, 3, 3}, 0.9, 0.2, 6);
  spectral::ClusterConfig cfg;
  cfg.k = 4;
  cfg.restarts = 20;
  const auto one = spectral::spectral_cluster(a, names_of(12), cfg);
  cfg.threads = 4;
  const auto four = spectral::spectral_cluster(a, names_of(12), cfg);
  CHECK(one.labels == four.labels);
  CHECK(one.restart_objectives == four.restart_objectives);
  CHECK(one.objective <= *std::min_element(one.restart_objectives.begin(), one.restart_objectives.end()));
}

TEST_CASE("bad adjacency and K are rejected; isolated nodes dropped") {
  spectral::ClusterConfig cfg;
  cfg.k = 2;
  Matrix a = planted({2, 2}, 1.0, 0.1, 7);
  Matrix asym = a;
  asym[0][1] += 1.0;
  CHECK_THROWS_AS(spectral::spectral_cluster(asym, names_of(4), cfg), ValidationError);
  Matrix neg = a;
  neg[0][1] = neg[1][0] = -1.0;
  CHECK_THROWS_AS(spectral::spectral_cluster(neg, names_of(4), cfg), ValidationError);
  cfg.k = 5;
  CHECK_THROWS_AS(spectral::spectral_cluster(a, names_of(4), cfg), ValidationError);
  cfg.k = 2;
  Matrix iso = linalg::zeros(5, 5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) iso[i][j] = a[i][j];
  const auto c = spectral::spectral_cluster(iso, names_of(5), cfg);
  CHECK(c.dropped == std::vector<std::string>{"m4"});
  CHECK(c.size() == 4);
}

TEST_CASE("distance map orders by cluster and assignments round-trip") {
  const Matrix a = planted({3, 4}, 1.0, 0.05, 8);
  spectral::ClusterConfig cfg;
  cfg.k = 2;
  const auto c = spectral::spectral_cluster(a, names_of(7), cfg);
  const auto dm = spectral::spectral_distance_map(c);
  CHECK(std::is_sorted(dm.labels.begin(), dm.labels.end()));
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(dm.distances[i][i] == 0.0);
    for (std::size_t j = 0; j < 7; ++j) CHECK(dm.distances[i][j] == dm.distances[j][i]);
  }
  const fs::path p = fs::temp_directory_path() / "archsim-clusters-test.json";
  spectral::save_assignment(c, p);
  const auto back = spectral::load_assignment(p);
  CHECK(back.labels == c.labels);
  CHECK(back.embedding == c.embedding);
  fs::remove(p);
}

TEST_CASE("kmeans objective matches its labels") {
  Matrix pts{{0, 0}, {0, 1}, {10, 10}, {10, 11}};
  const auto r = spectral::kmeans(pts, 2, 0);
  CHECK(r.labels[0] == r.labels[1]);
  CHECK(r.labels[2] == r.labels[3]);
  CHECK(r.objective == doctest::Approx(1.0));
  CHECK_THROWS_AS(spectral::kmeans(pts, 5, 0), ValidationError);
}
