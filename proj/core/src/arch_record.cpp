#include "archsim/arch_record.hpp"

#include <regex>

#include "archsim/errors.hpp"

namespace archsim::features {

namespace {

// Stem layers and resolutions are open-ended; they are checked by pattern
// ("7s2", "3s2/3/3", "16s16"; "224x224") in addition to the registry.
bool matches_pattern(std::size_t component, const std::string& value) {
  static const std::regex stem(R"(\d+s\d+(/\d+(s\d+)?)*)");
  static const std::regex resolution(R"(\d+x\d+)");
  if (component == kStemLayer) return std::regex_match(value, stem);
  if (component == kInputResolution) return std::regex_match(value, resolution);
  return false;
}

}  // namespace

FeatureVocabulary FeatureVocabulary::standard() {
  FeatureVocabulary v;
  auto add_all = [&](std::size_t c, std::initializer_list<const char*> values) {
    for (const char* s : values) v.add(c, s);
  };
  add_all(kBaseArchitecture, {"CNN", "Transformer", "MLP-Mixer", "Hybrid", "NAS (CNN)", "NAS (TFM)", "MLP"});
  add_all(kNormalization, {"BN", "GN", "LN", "LN + GN", "LN + BN", "Norm-free", "EvoNorm", "Affine transform", "none"});
  add_all(kHierarchical, {"Yes", "No"});
  add_all(kActivation, {"ReLU", "Leaky ReLU", "HardSwish", "SiLU", "GeLU", "ReLU + GeLU", "GeLU + ReLU", "ReLU + SiLU",
                        "ReLU + SiLU + ReLU6", "-"});
  add_all(kPoolingAtStem, {"Yes", "No"});
  add_all(kSelfAttention2d, {"Yes", "No"});
  add_all(kChannelWiseAttention, {"Yes", "No"});
  add_all(kDepthwiseConv, {"Yes", "No"});
  add_all(kGroupConv, {"Yes", "No"});
  add_all(kFinalPooling, {"GAP", "CLS token", "Flatten"});
  add_all(kCwAttentionLocation, {"End", "Middle", "-"});
  v.add(kStemLayer, "none");
  return v;
}

void FeatureVocabulary::add(std::size_t component, std::string value) {
  if (component >= kNumComponents) throw ValidationError("component index out of range");
  if (value.empty()) throw ValidationError("empty value for component " + std::string(kComponentNames[component]));
  allowed_[component].insert(std::move(value));
}

bool FeatureVocabulary::contains(std::size_t component, const std::string& value) const {
  if (component >= kNumComponents) return false;
  return allowed_[component].count(value) > 0 || matches_pattern(component, value);
}

void FeatureVocabulary::check(const ArchFeatureRecord& record) const {
  for (std::size_t c = 0; c < kNumComponents; ++c) {
    if (!contains(c, record.values[c])) {
      throw ValidationError("unknown value '" + record.values[c] + "' for component " + std::string(kComponentNames[c]));
    }
  }
}

std::size_t component_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumComponents; ++i)
    if (kComponentNames[i] == name) return i;
  throw ValidationError("unknown architecture component '" + std::string(name) + "'");
}

}  // namespace archsim::features
