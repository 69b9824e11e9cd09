#pragma once

// Small datasets and quickly trained models shared by the unit tests.

#include <string>
#include <vector>

#include "archsim/nn/model.hpp"
#include "archsim/zoo/zoo.hpp"

namespace archsim::testing {

inline Dataset tiny_shapes(std::uint64_t seed = 3, std::size_t per_class = 40, std::size_t classes = 4) {
  zoo::SynthRecipe r;
  r.seed = seed;
  r.num_classes = classes;
  r.per_class = per_class;
  r.resolution = 16;
  return zoo::synth_shapes(r);
}

inline nn::ModelSpec tiny_mlp(const std::string& name, std::size_t classes = 4, std::size_t hidden = 16) {
  nn::ModelSpec s;
  s.name = name;
  s.family = "mlp";
  s.input = {16, 16, 1};
  s.num_classes = classes;
  s.layers = {nn::LayerSpec::of(nn::LayerKind::kFlatten), nn::LayerSpec::dense(hidden),
              nn::LayerSpec::of(nn::LayerKind::kRelu), nn::LayerSpec::dense(classes)};
  return s;
}

inline nn::ModelSpec tiny_cnn(const std::string& name, std::size_t classes = 4) {
  nn::ModelSpec s;
  s.name = name;
  s.family = "cnn";
  s.input = {16, 16, 1};
  s.num_classes = classes;
  s.layers = {nn::LayerSpec::conv(4, 3, 1, 1), nn::LayerSpec::of(nn::LayerKind::kBatchNorm),
              nn::LayerSpec::of(nn::LayerKind::kRelu), nn::LayerSpec::pool(nn::LayerKind::kMaxPool, 2),
              nn::LayerSpec::of(nn::LayerKind::kGlobalAvgPool), nn::LayerSpec::dense(classes)};
  return s;
}

inline nn::TrainConfig quick_train(std::uint64_t seed, int epochs = 6) {
  nn::TrainConfig c;
  c.seed = seed;
  c.epochs = epochs;
  c.learning_rate = 0.05;
  c.batch_size = 16;
  c.weight_decay = 0.0;
  return c;
}

inline nn::Model trained(const nn::ModelSpec& spec, const Dataset& data, std::uint64_t seed, int epochs = 6) {
  return nn::train(spec, data, quick_train(seed, epochs));
}

}  // namespace archsim::testing
