#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "archsim/arch_record.hpp"
#include "archsim/tensor.hpp"

namespace archsim::nn {

enum class LayerKind {
  kDense,
  kConv2d,
  kBatchNorm,
  kLayerNorm,
  kRelu,
  kGelu,
  kSilu,
  kLeakyRelu,
  kMaxPool,
  kAvgPool,
  kGlobalAvgPool,
  kResidualBegin,
  kResidualEnd,
  kPatchify,
  kSelfAttention1h,
  kSqueezeExcite,
  kFlatten,
};

inline constexpr LayerKind kAllLayerKinds[] = {
    LayerKind::kDense,        LayerKind::kConv2d,        LayerKind::kBatchNorm,     LayerKind::kLayerNorm,
    LayerKind::kRelu,         LayerKind::kGelu,          LayerKind::kSilu,          LayerKind::kLeakyRelu,
    LayerKind::kMaxPool,      LayerKind::kAvgPool,       LayerKind::kGlobalAvgPool, LayerKind::kResidualBegin,
    LayerKind::kResidualEnd,  LayerKind::kPatchify,      LayerKind::kSelfAttention1h,
    LayerKind::kSqueezeExcite, LayerKind::kFlatten};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// One layer of a sequential graph. Only the fields relevant to `kind` are
/// read; zero means "use the default".
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t channels = 0;  // output width of dense / conv2d / patchify
  std::size_t kernel = 0;
  std::size_t stride = 0;    // conv default 1, pool default = kernel
  std::size_t padding = 0;
  std::size_t groups = 1;
  std::size_t hidden_dim = 0;       // squeeze-excite bottleneck override
  std::size_t reduction_ratio = 4;  // squeeze-excite
  std::size_t token_dim = 0;        // attention Q/K/V width, default = channels in
  float negative_slope = 0.01f;

  static LayerSpec dense(std::size_t units);
  static LayerSpec conv(std::size_t out, std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0,
                        std::size_t groups = 1);
  static LayerSpec patchify(std::size_t out, std::size_t patch);
  static LayerSpec pool(LayerKind kind, std::size_t kernel, std::size_t stride = 0);
  static LayerSpec attention(std::size_t token_dim = 0);
  static LayerSpec squeeze_excite(std::size_t reduction = 4);
  static LayerSpec leaky_relu(float slope);
  static LayerSpec of(LayerKind kind);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct InputResolution {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  Shape shape() const { return {height, width, channels}; }
  friend bool operator==(const InputResolution&, const InputResolution&) = default;
};

/// Declarative classifier: a sequential layer list with residual markers.
struct ModelSpec {
  std::string name;
  std::string family;  // zoo family tag, informational
  std::vector<LayerSpec> layers;
  InputResolution input;
  std::size_t num_classes = 0;
  features::ArchFeatureRecord arch_features;
};

/// Chain-checks the layer shapes and the final class count. Throws
/// ShapeError carrying the offending layer index.
void validate(const ModelSpec& spec);

}  // namespace archsim::nn
