#include "archsim/nn/serialize.hpp"

#include <json.hpp>

#include "archsim/errors.hpp"
#include "archsim/io/files.hpp"

namespace archsim::nn {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json layer_to_json(const LayerSpec& l) {
  const LayerSpec d;
  json j;
  j["kind"] = std::string(to_string(l.kind));
  if (l.channels != d.channels) j["channels"] = l.channels;
  if (l.kernel != d.kernel) j["kernel"] = l.kernel;
  if (l.stride != d.stride) j["stride"] = l.stride;
  if (l.padding != d.padding) j["padding"] = l.padding;
  if (l.groups != d.groups) j["groups"] = l.groups;
  if (l.hidden_dim != d.hidden_dim) j["hidden-dim"] = l.hidden_dim;
  if (l.reduction_ratio != d.reduction_ratio) j["reduction-ratio"] = l.reduction_ratio;
  if (l.token_dim != d.token_dim) j["token-dim"] = l.token_dim;
  if (l.negative_slope != d.negative_slope) j["negative-slope"] = l.negative_slope;
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  l.channels = j.value("channels", l.channels);
  l.kernel = j.value("kernel", l.kernel);
  l.stride = j.value("stride", l.stride);
  l.padding = j.value("padding", l.padding);
  l.groups = j.value("groups", l.groups);
  l.hidden_dim = j.value("hidden-dim", l.hidden_dim);
  l.reduction_ratio = j.value("reduction-ratio", l.reduction_ratio);
  l.token_dim = j.value("token-dim", l.token_dim);
  l.negative_slope = j.value("negative-slope", l.negative_slope);
  if (l.kind == LayerKind::kPatchify) l.stride = l.kernel;
  return l;
}

json spec_json(const ModelSpec& s) {
  json j;
  j["name"] = s.name;
  j["family"] = s.family;
  j["input"] = {{"height", s.input.height}, {"width", s.input.width}, {"channels", s.input.channels}};
  j["num-classes"] = s.num_classes;
  j["layers"] = json::array();
  for (const auto& l : s.layers) j["layers"].push_back(layer_to_json(l));
  json feats = json::object();
  for (std::size_t c = 0; c < features::kNumComponents; ++c) {
    if (!s.arch_features.values[c].empty()) feats[std::string(features::kComponentNames[c])] = s.arch_features.values[c];
  }
  j["arch-features"] = feats;
  return j;
}

ModelSpec spec_from(const json& j) {
  ModelSpec s;
  s.name = j.at("name").get<std::string>();
  s.family = j.value("family", std::string());
  const auto& in = j.at("input");
  s.input = {in.at("height").get<std::size_t>(), in.at("width").get<std::size_t>(), in.at("channels").get<std::size_t>()};
  s.num_classes = j.at("num-classes").get<std::size_t>();
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
  if (j.contains("arch-features")) {
    for (const auto& [k, v] : j.at("arch-features").items()) {
      s.arch_features.values[features::component_index(k)] = v.get<std::string>();
    }
  }
  return s;
}

json meta_json(const TrainingMeta& m) {
  return {{"trained", m.trained},
          {"seed", m.seed},
          {"learning-rate", m.learning_rate},
          {"weight-decay", m.weight_decay},
          {"momentum", m.momentum},
          {"epochs", m.epochs},
          {"schedule", m.schedule == Schedule::kCosine ? "cosine" : "step-decay"},
          {"batch-size", m.batch_size},
          {"label-mode", m.label_mode},
          {"teacher", m.teacher},
          {"train-accuracy", m.train_accuracy},
          {"eval-accuracy", m.eval_accuracy},
          {"epoch-loss", m.epoch_loss}};
}

TrainingMeta meta_from(const json& j) {
  TrainingMeta m;
  m.trained = j.value("trained", false);
  m.seed = j.value("seed", std::uint64_t{0});
  m.learning_rate = j.value("learning-rate", 0.0);
  m.weight_decay = j.value("weight-decay", 0.0);
  m.momentum = j.value("momentum", 0.0);
  m.epochs = j.value("epochs", 0);
  m.schedule = j.value("schedule", std::string("cosine")) == "cosine" ? Schedule::kCosine : Schedule::kStepDecay;
  m.batch_size = j.value("batch-size", std::size_t{0});
  m.label_mode = j.value("label-mode", std::string("hard-labels"));
  m.teacher = j.value("teacher", std::string());
  m.train_accuracy = j.value("train-accuracy", 0.0);
  m.eval_accuracy = j.value("eval-accuracy", 0.0);
  m.epoch_loss = j.value("epoch-loss", std::vector<double>{});
  return m;
}

json header_json(const Model& model, const std::string& blob_name) {
  json j;
  j["format"] = kModelFormat;
  j["spec"] = spec_json(model.spec());
  j["meta"] = meta_json(model.meta());
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& p : model.network().params()) {
    const Tensor& t = model.weights().at(p.name);
    manifest.push_back({{"name", p.name}, {"offset", offset}, {"shape", t.shape()}});
    offset += t.size() * 4;
  }
  j["weights"] = {{"file", blob_name}, {"bytes", offset}, {"tensors", manifest}};
  return j;
}

json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
}

}  // namespace

std::string spec_to_json(const ModelSpec& spec) { return spec_json(spec).dump(2) + "\n"; }

ModelSpec spec_from_json(const std::string& text) {
  const json j = parse(text, "model spec");
  try {
    ModelSpec s = spec_from(j.contains("spec") ? j.at("spec") : j);
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model spec: ") + e.what());
  }
}

std::string train_config_to_json(const TrainConfig& c) {
  json j = {{"seed", c.seed},
            {"learning-rate", c.learning_rate},
            {"weight-decay", c.weight_decay},
            {"momentum", c.momentum},
            {"epochs", c.epochs},
            {"schedule", c.schedule == Schedule::kCosine ? "cosine" : "step-decay"},
            {"batch-size", c.batch_size}};
  if (c.teacher) j["teacher"] = c.teacher->name();
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = parse(text, "training config");
  TrainConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.learning_rate = j.value("learning-rate", c.learning_rate);
    c.weight_decay = j.value("weight-decay", c.weight_decay);
    c.momentum = j.value("momentum", c.momentum);
    c.epochs = j.value("epochs", c.epochs);
    const std::string sched = j.value("schedule", std::string("cosine"));
    if (sched != "cosine" && sched != "step-decay") throw ValidationError("unknown schedule '" + sched + "'");
    c.schedule = sched == "cosine" ? Schedule::kCosine : Schedule::kStepDecay;
    c.batch_size = j.value("batch-size", c.batch_size);
  } catch (const json::exception& e) {
    throw FormatError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string model_header_json(const Model& model) { return header_json(model, "").dump(2) + "\n"; }

void save_model(const Model& model, const fs::path& path) {
  const std::string blob_name = path.filename().string() + ".f32";
  std::vector<std::uint8_t> blob;
  for (const auto& p : model.network().params()) {
    const auto bytes = io::encode_f32(model.weights().at(p.name).values());
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  fs::path blob_path = path;
  blob_path += ".f32";
  io::write_atomic(blob_path, std::span<const std::uint8_t>(blob));
  io::write_atomic(path, header_json(model, blob_name).dump(2) + "\n");
}

Model load_model(const fs::path& path) {
  const json j = parse(io::read_text(path), path.string());
  try {
    if (j.value("format", std::string()) != kModelFormat) {
      throw FormatError(path.string() + ": expected format " + kModelFormat);
    }
    ModelSpec spec = spec_from(j.at("spec"));
    TrainingMeta meta = meta_from(j.at("meta"));
    const auto& w = j.at("weights");
    const fs::path blob_path = path.parent_path() / w.at("file").get<std::string>();
    const auto blob = io::read_bytes(blob_path);
    if (blob.size() != w.at("bytes").get<std::size_t>()) throw FormatError(blob_path.string() + ": size mismatch");
    WeightMap weights;
    for (const auto& t : w.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      auto values = io::decode_f32(blob, t.at("offset").get<std::size_t>(), shape_size(shape));
      weights.emplace(t.at("name").get<std::string>(), Tensor::from_data(shape, std::move(values)));
    }
    return Model(std::move(spec), std::move(weights), std::move(meta));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace archsim::nn
