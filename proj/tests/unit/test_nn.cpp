#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "archsim/errors.hpp"
#include "archsim/io/files.hpp"
#include "archsim/nn/model.hpp"
#include "archsim/nn/serialize.hpp"
#include "fixtures.hpp"
#include "gradient_sweep.hpp"

using namespace archsim;
namespace fs = std::filesystem;

TEST_CASE("every layer kind passes finite-difference checks") {
  const auto cases = testing::gradient_sweep(5);
  std::map<nn::LayerKind, int> per_kind;
  for (const auto& c : cases) {
    INFO(c.description);
    CHECK(c.result.input_rel_error < 1e-3);
    CHECK(c.result.param_rel_error < 1e-3);
    ++per_kind[c.kind];
  }
  for (auto kind : nn::kAllLayerKinds) {
    if (kind == nn::LayerKind::kResidualEnd) continue;
    CHECK(per_kind[kind] >= 5);
  }
}

TEST_CASE("shape errors name the offending layer") {
  using nn::LayerSpec;
  try {
    nn::Network::build({LayerSpec::conv(4, 3), LayerSpec::conv(6, 3, 1, 0, 4), LayerSpec::conv(2, 5)}, {6, 6, 3});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.layer() >= 1);
  }
  try {
    nn::Network::build({LayerSpec::conv(5, 3, 1, 0, 2)}, {6, 6, 4});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.layer() == 0);
  }
  auto spec = testing::tiny_mlp("m", 4);
  spec.num_classes = 5;
  CHECK_THROWS_AS(nn::validate(spec), ShapeError);
}

TEST_CASE("tensors reject non-finite data") {
  CHECK_THROWS_AS(Tensor::from_data({2}, {1.0f, std::nanf("")}), NonFiniteError);
  CHECK_THROWS_AS(Tensor::from_data({3}, {1.0f, 2.0f}), ShapeError);
}

TEST_CASE("forward is independent of batch composition") {
  const auto data = testing::tiny_shapes();
  const nn::Model m(testing::tiny_cnn("c"), nn::init_weights(testing::tiny_cnn("c"), 5));
  const Tensor batch = data.images.slice_rows(0, 20);
  const Tensor all = nn::forward(m, batch);
  for (std::size_t i : {0u, 7u, 19u}) {
    const Tensor one = nn::forward(m, batch.slice_rows(i, i + 1));
    for (std::size_t c = 0; c < 4; ++c) CHECK(one[c] == all[i * 4 + c]);
  }
}

TEST_CASE("training is deterministic and learns") {
  const auto data = testing::tiny_shapes();
  auto cfg = testing::quick_train(11, 20);
  cfg.learning_rate = 0.2;
  const auto a = nn::train(testing::tiny_cnn("a"), data, cfg);
  const auto b = nn::train(testing::tiny_cnn("a"), data, cfg);
  CHECK(nn::model_header_json(a) == nn::model_header_json(b));
  for (const auto& [name, t] : a.weights()) CHECK(t == b.weights().at(name));
  CHECK(a.meta().eval_accuracy > 0.5);
  const auto c = testing::trained(testing::tiny_cnn("a"), data, 12);
  CHECK(c.weights().begin()->second != a.weights().begin()->second);
}

TEST_CASE("models round-trip through disk") {
  const auto data = testing::tiny_shapes();
  const auto m = testing::trained(testing::tiny_cnn("cnn-x"), data, 2, 2);
  const fs::path dir = fs::temp_directory_path() / "archsim-nn-test";
  fs::create_directories(dir);
  nn::save_model(m, dir / "m.json");
  const auto back = nn::load_model(dir / "m.json");
  CHECK(nn::model_header_json(back) == nn::model_header_json(m));
  CHECK(nn::predict(back, data.images) == nn::predict(m, data.images));
  nn::save_model(back, dir / "m2.json");
  CHECK(io::read_bytes(dir / "m.json.f32") == io::read_bytes(dir / "m2.json.f32"));
  fs::remove_all(dir);
}

TEST_CASE("spec and train config JSON round trips") {
  auto spec = testing::tiny_cnn("c");
  spec.arch_features[features::kBaseArchitecture] = "CNN";
  CHECK(nn::spec_to_json(nn::spec_from_json(nn::spec_to_json(spec))) == nn::spec_to_json(spec));
  nn::TrainConfig cfg;
  cfg.seed = 99;
  cfg.schedule = nn::Schedule::kStepDecay;
  cfg.batch_size = 7;
  CHECK(nn::train_config_to_json(nn::train_config_from_json(nn::train_config_to_json(cfg))) ==
        nn::train_config_to_json(cfg));
  CHECK_THROWS_AS(nn::train_config_from_json(R"({"learning-rate": -1})"), ValidationError);
}

TEST_CASE("learning rate schedules") {
  nn::TrainConfig c;
  c.learning_rate = 0.1;
  c.epochs = 8;
  CHECK(c.learning_rate_at(0) == doctest::Approx(0.1));
  CHECK(c.learning_rate_at(4) == doctest::Approx(0.05));
  c.schedule = nn::Schedule::kStepDecay;
  CHECK(c.learning_rate_at(3) == doctest::Approx(0.1));
  CHECK(c.learning_rate_at(4) == doctest::Approx(0.01));
  CHECK(c.learning_rate_at(6) == doctest::Approx(0.001));
}

TEST_CASE("input gradient matches the loss gradient") {
  const auto data = testing::tiny_shapes();
  const auto spec = testing::tiny_mlp("g");
  const nn::Model m(spec, nn::init_weights(spec, 1));
  const Tensor x = data.images.slice_rows(0, 3);
  const std::vector<int> y(data.labels.begin(), data.labels.begin() + 3);
  const Tensor g = nn::input_gradient(m, x, y);
  const auto lg = nn::loss_and_gradients(m.network(), m.weights(), x, y, nn::Mode::kInference);
  // The loss is a mean over the batch, the attack gradient a sum.
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(lg.input_grad[i] * 3).epsilon(1e-4));
}
