#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "archsim/attacks/attack.hpp"
#include "archsim/data.hpp"
#include "archsim/nn/model.hpp"

namespace archsim::sat {

struct SatConfig {
  double epsilon_floor = 0.01;  // clamp on the pre-log percentage
  double eval_fraction = 0.10;
  attacks::AttackConfig attack;
  std::uint64_t seed = 0;  // eval subsample selection
  unsigned threads = 1;

  void validate() const;
};

/// Indicator totals over a jointly-correct set X_AB. `a_fooled` counts
/// A(x_B) != y (A misled by B's adversarial examples), `b_fooled` the
/// reverse.
struct PairCounts {
  std::size_t eligible = 0;
  std::size_t a_fooled = 0;
  std::size_t b_fooled = 0;
};

/// max(eps_s, 100 * (a_fooled + b_fooled) / (2 |X_AB|)).
double raw_transfer(const PairCounts& c, double epsilon_floor);
/// Natural log of raw_transfer. Throws ValidationError when |X_AB| == 0.
double sat_value(const PairCounts& c, double epsilon_floor);
/// Same score from per-example indicator streams (equal length).
double sat_from_indicators(std::span<const std::uint8_t> a_on_b, std::span<const std::uint8_t> b_on_a,
                           double epsilon_floor);

/// Eval-split rows sampled once per matrix: round(fraction * |eval|),
/// at least one, drawn without replacement and returned sorted.
std::vector<std::size_t> eval_subset(const Dataset& data, double fraction, std::uint64_t seed);

/// Positions (into `eval`) where both models classify the clean input
/// correctly, after resizing to each model's resolution.
std::vector<std::size_t> eligible_set(const nn::Model& a, const nn::Model& b, const Dataset& eval);

/// Predictions of every model on every other model's adversarial examples
/// over a fixed example pool. Each source attacks the pool examples it
/// classifies correctly; example identities are dataset rows, so any
/// subset of the pool reuses the same perturbations.
struct TransferTable {
  std::vector<std::string> names;
  std::vector<std::size_t> rows;  // dataset row of each pool position
  std::vector<int> labels;
  std::vector<std::vector<std::uint8_t>> correct;  // [model][pos]
  /// pred[target][source][pos]; -1 where the source did not attack pos.
  std::vector<std::vector<std::vector<int>>> pred;

  std::size_t num_models() const { return names.size(); }
  std::size_t pool_size() const { return rows.size(); }

  /// Counts over X_AB restricted to `positions` (all positions if empty).
  PairCounts counts(std::size_t a, std::size_t b, std::span<const std::size_t> positions = {}) const;
  /// Eligible count and the number of inputs where the target misclassifies
  /// the source's adversarial example (one direction only).
  PairCounts one_sided_counts(std::size_t source, std::size_t target,
                              std::span<const std::size_t> positions = {}) const;
  /// Inputs in X_AB where both transferred attacks land on the same wrong class.
  std::size_t agreement(std::size_t a, std::size_t b) const;
  /// Self-attack success of a model on the inputs it classifies correctly.
  double self_success(std::size_t m) const;
};

/// Builds the table on `rows` of `data`. Attack generation runs in parallel
/// over sources, evaluation over (target, source) pairs. When `keep` is
/// non-null it receives each source's AdvBatch.
TransferTable build_transfer_table(std::span<const nn::Model> zoo, const Dataset& data,
                                   std::span<const std::size_t> rows, const attacks::AttackConfig& attack,
                                   unsigned threads = 1, std::vector<attacks::AdvBatch>* keep = nullptr);

struct SimilarityMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;      // ln scale; NaN for incomparable pairs
  std::vector<std::vector<double>> raw;         // clamped percentages
  std::vector<std::vector<std::size_t>> eligible;
  SatConfig config;
  std::vector<std::pair<std::string, std::string>> exclusions;

  std::size_t size() const { return names.size(); }
  std::size_t index_of(const std::string& name) const;
};

SimilarityMatrix matrix_from_table(const TransferTable& table, const SatConfig& cfg,
                                   std::span<const std::size_t> positions = {});

double sat(const nn::Model& a, const nn::Model& b, const Dataset& data, const SatConfig& cfg);
SimilarityMatrix sat_matrix(std::span<const nn::Model> zoo, const Dataset& data, const SatConfig& cfg);

/// Scores of `fresh` against each zoo member using only the fresh model's
/// adversarial examples: ln max(eps_s, 100 * mean 1[member(x_fresh) != y]).
std::vector<double> sat_one_sided(const nn::Model& fresh, std::span<const nn::Model> zoo, const Dataset& data,
                                  const SatConfig& cfg);
double one_sided_value(const PairCounts& c, double epsilon_floor);

/// Number of shared examples where A(x_B) and B(x_A) are the same wrong
/// class. Both batches must cover the same example ids in the same order.
std::size_t misclassification_agreement(const nn::Model& a, const nn::Model& b, const attacks::AdvBatch& adv_a,
                                        const attacks::AdvBatch& adv_b);

inline constexpr const char* kSatFormat = "archsim-sat/1";

/// CSV of ln-scale values with a names header, plus a JSON sidecar at
/// `<csv path with .json extension>` holding config, raw percentages,
/// exclusions and per-pair counts.
void save_similarity(const SimilarityMatrix& sm, const std::filesystem::path& csv_path);
SimilarityMatrix load_similarity(const std::filesystem::path& csv_path);

}  // namespace archsim::sat
