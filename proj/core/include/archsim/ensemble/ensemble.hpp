#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "archsim/data.hpp"
#include "archsim/nn/model.hpp"
#include "archsim/sat/sat.hpp"
#include "archsim/spectral/spectral.hpp"
#include "archsim/stats.hpp"

namespace archsim::ensemble {

/// Inference logits of every zoo model on one labeled image set, computed
/// once and shared by all ensemble evaluations.
struct LogitCache {
  std::vector<std::string> names;
  std::vector<std::vector<float>> logits;  // [model][example * classes + c]
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t num_models() const { return names.size(); }
  std::size_t num_examples() const { return labels.size(); }
  std::size_t index_of(const std::string& name) const;
};

LogitCache compute_logits(std::span<const nn::Model> zoo, const Tensor& images, std::span<const int> labels,
                          unsigned threads = 1);

struct EnsembleResult {
  std::vector<std::string> members;
  double top1_error = 0.0;
  std::vector<double> member_errors;
  /// 1 - top1_error / mean(member_errors); 0 when every member is perfect.
  double err_reduction_rate = 0.0;
  double all_wrong_ratio = 0.0;
};

/// Unweighted logit averaging; argmax ties go to the lowest class.
EnsembleResult evaluate(const LogitCache& cache, std::span<const std::size_t> members);
/// Convenience form on models; evaluates on the dataset's eval split.
EnsembleResult ensemble_error(std::span<const nn::Model> members, const Dataset& data);

struct DiversityResult {
  std::size_t n = 0, k = 0;
  bool feasible = false;
  std::size_t trials = 0;
  double mean_err = 0.0;
  double random_mean_err = 0.0;  // same number of uniformly drawn N-subsets
  std::string sampling;          // "rejection", "constructive" or "exhaustive"
};

/// Mean ERR over `trials` N-member ensembles spanning exactly k clusters.
/// Uniform rejection sampling, falling back to constructive sampling when
/// the acceptance cap is hit.
DiversityResult diversity_protocol(const LogitCache& cache, const spectral::ClusterAssignment& clusters,
                                   std::size_t n, std::size_t k, std::size_t trials, std::uint64_t seed);
/// Mean ERR over every N-subset spanning exactly k clusters.
DiversityResult diversity_exhaustive(const LogitCache& cache, const spectral::ClusterAssignment& clusters,
                                     std::size_t n, std::size_t k);

struct CorrelationReport {
  std::vector<std::string> labels;  // one per point, e.g. "a|b"
  std::vector<double> x, y;
  stats::Correlation pearson, spearman;
  bool degenerate = false;  // one variable constant: coefficients undefined
};

CorrelationReport correlate(std::vector<std::string> labels, std::vector<double> x, std::vector<double> y);

/// (SAT, 2-ensemble ERR) over every comparable pair. Refuses fewer than
/// 8 pairs.
CorrelationReport similarity_vs_ensemble(const sat::SimilarityMatrix& sm, const LogitCache& cache);

struct DistillRow {
  std::string teacher;
  std::string teacher_family;
  bool same_family = false;
  double teacher_accuracy = 0.0;
  double student_accuracy = 0.0;
  double sat = 0.0;  // teacher vs its student
  bool below_scratch = false;  // teacher accuracy under the scratch student's
};

struct DistillReport {
  std::string student_spec;
  double scratch_accuracy = 0.0;
  std::vector<DistillRow> rows;
  CorrelationReport overall, same_family, cross_family, teacher_control;
};

/// Trains one student per teacher with teacher-argmax labels (same seed and
/// config) plus a scratch student on ground truth, then correlates student
/// accuracy with teacher-student SAT. Needs >= 6 teachers from >= 2 families.
DistillReport distill_similarity_study(const nn::ModelSpec& student, std::span<const nn::Model> teachers,
                                       const Dataset& data, const nn::TrainConfig& train_cfg,
                                       const sat::SatConfig& sat_cfg);

/// Ensembles re-evaluated on a second dataset after fine-tuning every model
/// there; SAT still comes from the first dataset.
CorrelationReport cross_dataset_study(std::span<const nn::Model> zoo, const sat::SimilarityMatrix& sm,
                                      const Dataset& second, const nn::TrainConfig& finetune, unsigned threads = 1);

}  // namespace archsim::ensemble
