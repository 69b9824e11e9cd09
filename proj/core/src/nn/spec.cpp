#include "archsim/nn/spec.hpp"

#include <array>
#include <utility>

#include "archsim/errors.hpp"
#include "archsim/nn/network.hpp"

namespace archsim::nn {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 17> kKindNames = {{
    {LayerKind::kDense, "dense"},
    {LayerKind::kConv2d, "conv2d"},
    {LayerKind::kBatchNorm, "batch-norm"},
    {LayerKind::kLayerNorm, "layer-norm"},
    {LayerKind::kRelu, "relu"},
    {LayerKind::kGelu, "gelu"},
    {LayerKind::kSilu, "silu"},
    {LayerKind::kLeakyRelu, "leaky-relu"},
    {LayerKind::kMaxPool, "max-pool"},
    {LayerKind::kAvgPool, "avg-pool"},
    {LayerKind::kGlobalAvgPool, "global-avg-pool"},
    {LayerKind::kResidualBegin, "residual-begin"},
    {LayerKind::kResidualEnd, "residual-end"},
    {LayerKind::kPatchify, "patchify"},
    {LayerKind::kSelfAttention1h, "self-attention-1h"},
    {LayerKind::kSqueezeExcite, "squeeze-excite"},
    {LayerKind::kFlatten, "flatten"},
}};

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ValidationError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::dense(std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.channels = units;
  return s;
}

LayerSpec LayerSpec::conv(std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
                          std::size_t groups) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.groups = groups;
  return s;
}

LayerSpec LayerSpec::patchify(std::size_t out, std::size_t patch) {
  LayerSpec s;
  s.kind = LayerKind::kPatchify;
  s.channels = out;
  s.kernel = patch;
  s.stride = patch;
  return s;
}

LayerSpec LayerSpec::pool(LayerKind kind, std::size_t kernel, std::size_t stride) {
  LayerSpec s;
  s.kind = kind;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::attention(std::size_t token_dim) {
  LayerSpec s;
  s.kind = LayerKind::kSelfAttention1h;
  s.token_dim = token_dim;
  return s;
}

LayerSpec LayerSpec::squeeze_excite(std::size_t reduction) {
  LayerSpec s;
  s.kind = LayerKind::kSqueezeExcite;
  s.reduction_ratio = reduction;
  return s;
}

LayerSpec LayerSpec::leaky_relu(float slope) {
  LayerSpec s;
  s.kind = LayerKind::kLeakyRelu;
  s.negative_slope = slope;
  return s;
}

LayerSpec LayerSpec::of(LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  return s;
}

void validate(const ModelSpec& spec) {
  if (spec.name.empty()) throw ValidationError("model spec needs a name");
  if (spec.num_classes < 2) throw ValidationError("num-classes must be at least 2");
  if (spec.input.height == 0 || spec.input.width == 0 || spec.input.channels == 0) {
    throw ValidationError("input resolution must be positive");
  }
  auto net = Network::build(spec.layers, spec.input.shape());
  const Shape& out = net->output_shape();
  if (out.size() != 1 || out[0] != spec.num_classes) {
    throw ShapeError(static_cast<std::ptrdiff_t>(spec.layers.size()) - 1,
                     "final output " + shape_string(out) + " does not match num-classes " +
                         std::to_string(spec.num_classes));
  }
}

}  // namespace archsim::nn
