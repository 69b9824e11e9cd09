#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "archsim/data.hpp"
#include "archsim/nn/network.hpp"
#include "archsim/nn/spec.hpp"

namespace archsim::nn {

class Model;

enum class Schedule { kStepDecay, kCosine };

struct TrainConfig {
  std::uint64_t seed = 0;
  double learning_rate = 0.05;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  int epochs = 10;
  Schedule schedule = Schedule::kCosine;
  std::size_t batch_size = 64;
  /// When set, training uses the teacher's argmax predictions as labels
  /// (hard distillation). Images are resized to the teacher resolution.
  std::shared_ptr<const Model> teacher;

  void validate() const;
  /// Learning rate used during the given 0-based epoch.
  double learning_rate_at(int epoch) const;
};

struct TrainingMeta {
  bool trained = false;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  double momentum = 0.0;
  int epochs = 0;
  Schedule schedule = Schedule::kCosine;
  std::size_t batch_size = 0;
  std::string label_mode = "hard-labels";
  std::string teacher;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;  // final clean accuracy on the eval split
  std::vector<double> epoch_loss;
};

/// Spec plus weights. Immutable once constructed; copies share the
/// compiled network.
class Model {
 public:
  Model(ModelSpec spec, WeightMap weights, TrainingMeta meta = {});

  const std::string& name() const noexcept { return spec_.name; }
  const ModelSpec& spec() const noexcept { return spec_; }
  const WeightMap& weights() const noexcept { return weights_; }
  const TrainingMeta& meta() const noexcept { return meta_; }
  const Network& network() const noexcept { return *network_; }
  std::size_t num_classes() const noexcept { return spec_.num_classes; }
  const InputResolution& resolution() const noexcept { return spec_.input; }

  /// Copy with a different name (weights shared by value).
  Model renamed(std::string name) const;

 private:
  ModelSpec spec_;
  WeightMap weights_;
  TrainingMeta meta_;
  std::shared_ptr<const Network> network_;
};

/// Seeded initial weights: Kaiming-uniform for dense/conv/attention
/// projections, zero biases, unit/zero norm affine and running stats. Each
/// tensor draws from its own stream named after the parameter.
WeightMap init_weights(const ModelSpec& spec, std::uint64_t seed);

/// Inference-mode logits, shape (N, num-classes).
Tensor forward(const Model& model, const Tensor& batch);

/// Resizes an (N,H,W,C) batch to the model resolution when they differ.
Tensor fit_to_model(const Model& model, const Tensor& batch);

/// Argmax predictions, evaluated in chunks; input is resized to the model
/// resolution when needed.
std::vector<int> predict(const Model& model, const Tensor& batch, std::size_t chunk = 256);

double accuracy(const Model& model, const Tensor& images, std::span<const int> labels);

/// Gradient of the summed softmax cross-entropy with respect to the input,
/// in inference mode. Each example's gradient depends only on that example.
Tensor input_gradient(const Model& model, const Tensor& batch, std::span<const int> labels);

struct LossAndGrads {
  double loss = 0.0;  // mean cross-entropy
  Tensor input_grad;
  std::vector<Tensor> param_grads;  // ordered as Network::params()
  Tape tape;
};

/// Mean cross-entropy, its input gradient and parameter gradients.
LossAndGrads loss_and_gradients(const Network& net, const WeightMap& weights, const Tensor& batch,
                                std::span<const int> labels, Mode mode);

using EpochCallback = std::function<void(int epoch, const Model& snapshot)>;

/// SGD with momentum and weight decay. Deterministic for fixed
/// (seed, config, dataset). Trains on the train split; the eval split, when
/// present, supplies the recorded clean accuracy. The callback, if any, sees
/// the initial weights (epoch 0) and every completed epoch.
Model train(const ModelSpec& spec, const Dataset& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Continues training from existing weights (used for cross-dataset checks).
Model fine_tune(const Model& model, const Dataset& dataset, const TrainConfig& cfg);

}  // namespace archsim::nn
