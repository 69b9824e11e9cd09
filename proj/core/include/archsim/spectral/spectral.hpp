#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "archsim/linalg.hpp"
#include "archsim/sat/sat.hpp"

namespace archsim::spectral {

using linalg::Matrix;

enum class AdjacencyScale { kPercent, kShiftedLog };

struct Adjacency {
  std::vector<std::string> names;
  Matrix weights;  // symmetric, nonnegative, zero diagonal
  std::vector<std::string> dropped;  // nodes removed for missing pairs
};

/// Edge weights from a similarity matrix: raw transfer percentages, or
/// ln-scale values shifted by -ln(eps_s) so the floor maps to zero. Nodes
/// with incomparable pairs are dropped, most-missing first, until none
/// remain.
Adjacency adjacency_from_sat(const sat::SimilarityMatrix& sm, AdjacencyScale scale = AdjacencyScale::kPercent);

struct ClusterConfig {
  std::size_t k = 10;
  int restarts = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ClusterAssignment {
  std::vector<std::string> names;
  std::vector<int> labels;  // in [0,K), numbered by first appearance
  Matrix embedding;         // N x K, unit rows
  std::vector<double> eigenvalues;  // the K largest of the normalized affinity
  double objective = 0.0;           // best K-means within-cluster sum of squares
  std::vector<double> restart_objectives;
  ClusterConfig config;
  std::vector<std::string> dropped;  // isolated nodes

  std::size_t size() const { return names.size(); }
};

/// Ng-Jordan-Weiss spectral clustering: eigenvectors of the K largest
/// eigenvalues of D^-1/2 A D^-1/2, row-normalized, then K-means++ with
/// `restarts` seeded restarts keeping the best objective.
ClusterAssignment spectral_cluster(const Matrix& adjacency, const std::vector<std::string>& names,
                                   const ClusterConfig& cfg);
ClusterAssignment spectral_cluster(const Adjacency& adjacency, const ClusterConfig& cfg);

struct KMeansResult {
  std::vector<int> labels;
  double objective = 0.0;
};

/// One K-means++ seeded Lloyd run. Assignment ties go to the lowest index.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations = 300);

struct DistanceMap {
  std::vector<std::string> names;  // sorted by cluster, then original order
  std::vector<int> labels;
  Matrix distances;
};

/// Euclidean distances between embedding rows, ordered by cluster index.
DistanceMap spectral_distance_map(const ClusterAssignment& assignment);

/// Fraction of nodes whose cluster's majority tag matches their own tag.
double cluster_purity(const std::vector<int>& labels, const std::vector<std::string>& tags);

void save_assignment(const ClusterAssignment& a, const std::filesystem::path& path);
ClusterAssignment load_assignment(const std::filesystem::path& path);
void save_distance_map(const DistanceMap& m, const std::filesystem::path& csv_path);

}  // namespace archsim::spectral
