#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "archsim/nn/spec.hpp"
#include "archsim/tensor.hpp"

namespace archsim::nn {

using WeightMap = std::map<std::string, Tensor>;

enum class Mode { kInference, kTraining };

enum class ParamRole {
  kWeight,     // Kaiming-uniform, weight decay applies
  kBias,       // zeros
  kNormScale,  // ones
  kNormShift,  // zeros
  kBuffer,     // running statistics, not trained
};

struct ParamInfo {
  std::string name;
  Shape shape;
  ParamRole role = ParamRole::kWeight;
  std::size_t fan_in = 0;
  std::size_t layer = 0;
  bool init_ones = false;  // buffers such as running variance
};

class Layer;

/// Per-layer scratch saved by a forward pass for the backward pass.
struct LayerCache {
  std::vector<float> a;
  std::vector<float> b;
  std::vector<float> c;
  std::vector<std::uint32_t> index;
};

/// Activations and caches of one forward pass.
struct Tape {
  std::vector<Tensor> activations;  // activations[i] is the input of layer i
  std::vector<LayerCache> caches;
  Mode mode = Mode::kInference;
};

/// A compiled, shape-checked layer sequence. Immutable and shareable;
/// weights are supplied by the caller on every pass.
class Network {
 public:
  /// Builds and chain-checks the layers for the given per-example input
  /// shape. Throws ShapeError with the failing layer index.
  static std::shared_ptr<const Network> build(const std::vector<LayerSpec>& layers, const Shape& input_shape);

  ~Network();
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return shapes_.back(); }
  /// Per-example shape entering layer i (i == num_layers() gives the output).
  const Shape& shape_at(std::size_t i) const { return shapes_.at(i); }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  const std::vector<ParamInfo>& params() const noexcept { return params_; }

  /// Batched forward. `batch` has shape (N, input...). Checks every
  /// activation for NaN/Inf and reports the layer index.
  Tensor forward(const Tensor& batch, const WeightMap& weights, Mode mode, Tape* tape = nullptr) const;

  /// Backpropagates `grad_out` (shape of the forward output). Returns the
  /// input gradient. When `param_grads` is non-null it is resized to
  /// params().size() and receives accumulated parameter gradients
  /// (buffers get empty tensors).
  Tensor backward(const Tensor& grad_out, const WeightMap& weights, const Tape& tape,
                  std::vector<Tensor>* param_grads) const;

  /// Folds the batch statistics recorded in a training-mode tape into the
  /// running-statistic buffers.
  void update_running_stats(const Tape& tape, WeightMap& weights) const;

 private:
  Network() = default;
  std::vector<const Tensor*> bind(const WeightMap& weights) const;

  Shape input_shape_;
  std::vector<Shape> shapes_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::size_t> param_offset_;  // first param index of each layer
  std::vector<std::size_t> param_count_;
  std::vector<std::ptrdiff_t> residual_partner_;
  std::vector<ParamInfo> params_;
};

}  // namespace archsim::nn
