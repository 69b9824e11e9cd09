#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace archsim::features {

inline constexpr std::size_t kNumComponents = 13;

/// Component names, in the fixed order used by difference vectors.
inline constexpr std::array<std::string_view, kNumComponents> kComponentNames = {
    "base-architecture",  "stem-layer",     "input-resolution",       "normalization",
    "hierarchical",       "activation",     "pooling-at-stem",        "2d-self-attention",
    "channel-wise-attention", "depthwise-conv", "group-conv",         "final-pooling",
    "cw-attention-location"};

enum Component : std::size_t {
  kBaseArchitecture = 0,
  kStemLayer,
  kInputResolution,
  kNormalization,
  kHierarchical,
  kActivation,
  kPoolingAtStem,
  kSelfAttention2d,
  kChannelWiseAttention,
  kDepthwiseConv,
  kGroupConv,
  kFinalPooling,
  kCwAttentionLocation,
};

/// Architectural "model card": one categorical value per component.
struct ArchFeatureRecord {
  std::array<std::string, kNumComponents> values;

  const std::string& operator[](std::size_t i) const { return values.at(i); }
  std::string& operator[](std::size_t i) { return values.at(i); }

  bool empty() const {
    for (const auto& v : values)
      if (!v.empty()) return false;
    return true;
  }

  friend bool operator==(const ArchFeatureRecord&, const ArchFeatureRecord&) = default;
};

/// Allowed values per component. Starts from the component table of the
/// analysis (CNN/Transformer/..., BN/LN/..., etc.) and accepts registrations.
class FeatureVocabulary {
 public:
  static FeatureVocabulary standard();

  void add(std::size_t component, std::string value);
  bool contains(std::size_t component, const std::string& value) const;
  const std::set<std::string>& values(std::size_t component) const { return allowed_.at(component); }

  /// Throws ValidationError naming the first component with an unknown value.
  void check(const ArchFeatureRecord& record) const;

 private:
  std::array<std::set<std::string>, kNumComponents> allowed_;
};

std::size_t component_index(std::string_view name);

}  // namespace archsim::features
