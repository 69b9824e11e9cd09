#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "archsim/nn/model.hpp"
#include "archsim/tensor.hpp"

namespace archsim::attacks {

enum class Method { kPgd, kMifgsm, kFgsm };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

/// Untargeted L-infinity attack settings. Pixel scale is [0,1].
struct AttackConfig {
  Method method = Method::kPgd;
  double epsilon = 8.0 / 255.0;
  double step_size = 0.1;
  int iterations = 50;
  double momentum_decay = 1.0;  // MI-FGSM only
  std::uint64_t seed = 0;       // PGD random start

  void validate() const;

  /// MI-FGSM with step epsilon/iterations, the usual pairing for that attack.
  static AttackConfig mifgsm(double epsilon, int iterations);
  static AttackConfig fgsm(double epsilon);
};

struct AdvBatch {
  std::string source_model;
  Tensor clean;        // at the source model's resolution
  Tensor adversarial;  // same shape as clean
  std::vector<int> labels;
  /// Identity of each example (dataset row). Seeds the per-example random
  /// start, so an example's perturbation does not depend on its batch.
  std::vector<std::size_t> example_ids;
  AttackConfig config;
  std::vector<bool> fooled_source;

  std::size_t size() const { return labels.size(); }
  /// Rows restricted to the given positions.
  AdvBatch subset(std::span<const std::size_t> positions) const;
};

/// Attacks `batch` (resized to the model resolution first). `example_ids`
/// defaults to 0..n-1. Examples are processed in chunks; the result is
/// independent of chunking.
AdvBatch attack(const nn::Model& model, const Tensor& batch, std::span<const int> labels, const AttackConfig& cfg,
                std::span<const std::size_t> example_ids = {});

/// Fraction of adversarial examples the model misclassifies (resized to
/// the model resolution when needed).
double attack_success_rate(const nn::Model& model, const AdvBatch& adv);

inline constexpr const char* kAdvFormat = "archsim-adv/1";

/// `<path>` manifest JSON plus `<path>.clean.f32`, `<path>.adv.f32` and
/// `<path>.labels.csv`.
void save_adv(const AdvBatch& adv, const std::filesystem::path& path);
AdvBatch load_adv(const std::filesystem::path& path);

}  // namespace archsim::attacks
