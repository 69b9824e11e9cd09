#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "archsim/arch_record.hpp"
#include "archsim/sat/sat.hpp"

namespace archsim::features {

using DiffVector = std::array<std::uint8_t, kNumComponents>;

/// diff[i] = 1 iff component i differs. Records with an empty component do
/// not follow the schema and are rejected.
DiffVector hamming_diff(const ArchFeatureRecord& a, const ArchFeatureRecord& b);

struct PairFeatureRow {
  std::string a, b;
  DiffVector diff{};
  double target = 0.0;  // SAT value of the pair
};

/// One row per unordered pair with a finite score, in matrix order.
std::vector<PairFeatureRow> pair_rows(const sat::SimilarityMatrix& sm,
                                      const std::map<std::string, ArchFeatureRecord>& records);

struct GbmConfig {
  int stages = 500;
  int max_depth = 12;
  std::size_t min_samples_split = 4;
  std::size_t min_samples_leaf = 1;
  double learning_rate = 0.02;
  std::uint64_t seed = 0;  // feature visiting order, which breaks gain ties

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1, right = -1;
  double value = 0.0;
};

using Tree = std::vector<TreeNode>;

/// Squared-error gradient boosting: an initial mean plus shrunken
/// regression trees fitted to the residuals.
class Regressor {
 public:
  double predict(std::span<const double> x) const;
  std::vector<double> predict(const std::vector<std::vector<double>>& x) const;

  double base = 0.0;
  double learning_rate = 0.0;
  std::vector<Tree> trees;
  double train_r2 = 0.0;
  std::size_t num_features = 0;

  /// Features used by at least one split.
  std::vector<bool> used_features() const;
};

double r2_score(std::span<const double> y, std::span<const double> pred);

/// Fits on a dense feature matrix. Rows are put in a canonical order first,
/// so the fit does not depend on input row order.
Regressor fit_gbm(const std::vector<std::vector<double>>& x, const std::vector<double>& y, const GbmConfig& cfg);
/// Needs at least 30 rows.
Regressor fit_gbm(const std::vector<PairFeatureRow>& rows, const GbmConfig& cfg);

/// Single decision tree on squared error (building block, exposed for tests).
Tree fit_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& residual, const GbmConfig& cfg);
double predict_tree(const Tree& tree, std::span<const double> x);

/// R^2 drop when feature `feature` is reordered by `perm` (perm[i] is the
/// source row for row i).
double permuted_r2_drop(const Regressor& model, const std::vector<std::vector<double>>& x,
                        const std::vector<double>& y, std::size_t feature, std::span<const std::size_t> perm);

/// Mean R^2 drop over `repeats` seeded shuffles of each column. Rows are
/// canonicalized first, so scores do not depend on row order.
std::vector<double> permutation_importance(const Regressor& model, const std::vector<std::vector<double>>& x,
                                           const std::vector<double>& y, int repeats, std::uint64_t seed);
std::vector<double> permutation_importance(const Regressor& model, const std::vector<PairFeatureRow>& rows,
                                           int repeats = 10, std::uint64_t seed = 0);

void rows_to_matrix(const std::vector<PairFeatureRow>& rows, std::vector<std::vector<double>>& x,
                    std::vector<double>& y);

}  // namespace archsim::features
