#include "archsim/attacks/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "archsim/errors.hpp"
#include "archsim/io/files.hpp"
#include "archsim/log.hpp"
#include "archsim/rng.hpp"

namespace archsim::attacks {

namespace {

constexpr std::size_t kChunk = 64;

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kPgd:
      return "pgd";
    case Method::kMifgsm:
      return "mifgsm";
    case Method::kFgsm:
      return "fgsm";
  }
  return "pgd";
}

Method method_from_string(std::string_view name) {
  if (name == "pgd") return Method::kPgd;
  if (name == "mifgsm") return Method::kMifgsm;
  if (name == "fgsm") return Method::kFgsm;
  throw ValidationError("unknown attack method '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0,1]");
  if (!(step_size > 0.0)) throw ValidationError("attack step size must be positive");
  if (iterations <= 0) throw ValidationError("attack iterations must be positive");
  if (method == Method::kFgsm && iterations != 1) throw ValidationError("fgsm takes exactly one iteration");
  if (!(momentum_decay >= 0.0 && momentum_decay <= 1.0)) throw ValidationError("momentum decay must lie in [0,1]");
}

AttackConfig AttackConfig::mifgsm(double epsilon, int iterations) {
  AttackConfig c;
  c.method = Method::kMifgsm;
  c.epsilon = epsilon;
  c.iterations = iterations;
  c.step_size = epsilon / iterations;
  return c;
}

AttackConfig AttackConfig::fgsm(double epsilon) {
  AttackConfig c;
  c.method = Method::kFgsm;
  c.epsilon = epsilon;
  c.iterations = 1;
  c.step_size = epsilon;
  return c;
}

AdvBatch AdvBatch::subset(std::span<const std::size_t> positions) const {
  AdvBatch out;
  out.source_model = source_model;
  out.config = config;
  out.clean = clean.gather_rows(positions);
  out.adversarial = adversarial.gather_rows(positions);
  for (auto p : positions) {
    out.labels.push_back(labels.at(p));
    out.example_ids.push_back(example_ids.at(p));
    out.fooled_source.push_back(fooled_source.at(p));
  }
  return out;
}

namespace {

void attack_chunk(const nn::Model& model, const Tensor& x0, std::span<const int> y, std::span<const std::size_t> ids,
                  const AttackConfig& cfg, Tensor& x) {
  const std::size_t n = x0.dim(0);
  const std::size_t row = x0.row_size();
  const float eps = static_cast<float>(cfg.epsilon);
  const float alpha = static_cast<float>(cfg.method == Method::kFgsm ? cfg.epsilon : cfg.step_size);
  std::vector<float> lo(x0.size()), hi(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    lo[i] = std::max(0.0f, x0[i] - eps);
    hi[i] = std::min(1.0f, x0[i] + eps);
  }
  x = x0;
  if (cfg.method == Method::kPgd) {
    for (std::size_t b = 0; b < n; ++b) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(ids[b])), "pgd-start");
      for (std::size_t j = 0; j < row; ++j) {
        const std::size_t i = b * row + j;
        x[i] = std::clamp(x0[i] + static_cast<float>(rng.uniform(-cfg.epsilon, cfg.epsilon)), lo[i], hi[i]);
      }
    }
  }
  std::vector<float> momentum(cfg.method == Method::kMifgsm ? x0.size() : 0, 0.0f);
  const float mu = static_cast<float>(cfg.momentum_decay);
  for (int it = 0; it < cfg.iterations; ++it) {
    const Tensor g = nn::input_gradient(model, x, y);
    for (std::size_t b = 0; b < n; ++b) {
      const float* gb = g.raw() + b * row;
      if (cfg.method == Method::kMifgsm) {
        double l1 = 0.0;
        for (std::size_t j = 0; j < row; ++j) l1 += std::fabs(gb[j]);
        const float inv = l1 > 0.0 ? static_cast<float>(1.0 / l1) : 0.0f;
        for (std::size_t j = 0; j < row; ++j) {
          float& m = momentum[b * row + j];
          m = mu * m + gb[j] * inv;
        }
      }
      for (std::size_t j = 0; j < row; ++j) {
        const std::size_t i = b * row + j;
        const float dir = cfg.method == Method::kMifgsm ? sign(momentum[i]) : sign(gb[j]);
        x[i] = std::clamp(x[i] + alpha * dir, lo[i], hi[i]);
      }
    }
  }
}

}  // namespace

AdvBatch attack(const nn::Model& model, const Tensor& batch, std::span<const int> labels, const AttackConfig& cfg,
                std::span<const std::size_t> example_ids) {
  cfg.validate();
  AdvBatch out;
  out.source_model = model.name();
  out.config = cfg;
  out.clean = nn::fit_to_model(model, batch);
  const std::size_t n = out.clean.dim(0);
  if (labels.size() != n) throw ValidationError("label count does not match batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes()) throw ValidationError("label out of range");
  }
  for (float v : out.clean.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("attack input must lie in [0,1]");
  }
  out.labels.assign(labels.begin(), labels.end());
  if (example_ids.empty()) {
    out.example_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.example_ids[i] = i;
  } else {
    if (example_ids.size() != n) throw ValidationError("example id count does not match batch");
    out.example_ids.assign(example_ids.begin(), example_ids.end());
  }

  if (cfg.epsilon == 0.0) {
    warn("attack on '" + model.name() + "' with epsilon 0 returns the clean batch");
    out.adversarial = out.clean;
    out.fooled_source.assign(n, false);
    return out;
  }

  out.adversarial = Tensor(out.clean.shape());
  const std::size_t row = out.clean.row_size();
  for (std::size_t b = 0; b < n; b += kChunk) {
    const std::size_t e = std::min(n, b + kChunk);
    const Tensor x0 = out.clean.slice_rows(b, e);
    Tensor x;
    attack_chunk(model, x0, std::span(out.labels).subspan(b, e - b), std::span(out.example_ids).subspan(b, e - b),
                 cfg, x);
    std::copy(x.data().begin(), x.data().end(), out.adversarial.data().begin() + static_cast<std::ptrdiff_t>(b * row));
  }
  const auto pred = nn::predict(model, out.adversarial);
  out.fooled_source.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.fooled_source[i] = pred[i] != out.labels[i];
  return out;
}

double attack_success_rate(const nn::Model& model, const AdvBatch& adv) {
  if (adv.size() == 0) throw ValidationError("empty adversarial batch");
  const auto pred = nn::predict(model, adv.adversarial);
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) fooled += pred[i] != adv.labels[i];
  return static_cast<double>(fooled) / static_cast<double>(pred.size());
}

void save_adv(const AdvBatch& adv, const std::filesystem::path& path) {
  using nlohmann::json;
  const std::string base = path.filename().string();
  std::filesystem::path clean_path = path, adv_path = path, labels_path = path;
  clean_path += ".clean.f32";
  adv_path += ".adv.f32";
  labels_path += ".labels.csv";
  io::write_atomic(clean_path, std::span<const std::uint8_t>(io::encode_f32(adv.clean.values())));
  io::write_atomic(adv_path, std::span<const std::uint8_t>(io::encode_f32(adv.adversarial.values())));
  std::ostringstream csv;
  csv << "example_id,label,fooled_source\n";
  for (std::size_t i = 0; i < adv.size(); ++i) {
    csv << adv.example_ids[i] << ',' << adv.labels[i] << ',' << (adv.fooled_source[i] ? 1 : 0) << '\n';
  }
  io::write_atomic(labels_path, csv.str());
  json j;
  j["format"] = kAdvFormat;
  j["source-model"] = adv.source_model;
  j["shape"] = adv.clean.shape();
  j["config"] = {{"method", std::string(to_string(adv.config.method))},
                 {"epsilon", adv.config.epsilon},
                 {"step-size", adv.config.step_size},
                 {"iterations", adv.config.iterations},
                 {"momentum-decay", adv.config.momentum_decay},
                 {"seed", adv.config.seed}};
  j["files"] = {{"clean", base + ".clean.f32"}, {"adversarial", base + ".adv.f32"}, {"labels", base + ".labels.csv"}};
  io::write_atomic(path, j.dump(2) + "\n");
}

AdvBatch load_adv(const std::filesystem::path& path) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    if (j.value("format", std::string()) != kAdvFormat) throw FormatError(path.string() + ": expected " + kAdvFormat);
    AdvBatch adv;
    adv.source_model = j.at("source-model").get<std::string>();
    const auto& c = j.at("config");
    adv.config.method = method_from_string(c.at("method").get<std::string>());
    adv.config.epsilon = c.at("epsilon").get<double>();
    adv.config.step_size = c.at("step-size").get<double>();
    adv.config.iterations = c.at("iterations").get<int>();
    adv.config.momentum_decay = c.at("momentum-decay").get<double>();
    adv.config.seed = c.at("seed").get<std::uint64_t>();
    const Shape shape = j.at("shape").get<Shape>();
    const auto dir = path.parent_path();
    const auto& files = j.at("files");
    auto blob = [&](const char* key) {
      const auto bytes = io::read_bytes(dir / files.at(key).get<std::string>());
      if (bytes.size() != shape_size(shape) * 4) throw FormatError(path.string() + ": " + key + " blob size mismatch");
      return Tensor::from_data(shape, io::decode_f32(bytes, 0, shape_size(shape)));
    };
    adv.clean = blob("clean");
    adv.adversarial = blob("adversarial");
    std::istringstream csv(io::read_text(dir / files.at("labels").get<std::string>()));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
      if (line.empty()) continue;
      std::size_t id = 0;
      int label = 0, fooled = 0;
      char c1 = 0, c2 = 0;
      std::istringstream ls(line);
      if (!(ls >> id >> c1 >> label >> c2 >> fooled) || c1 != ',' || c2 != ',') {
        throw FormatError(path.string() + ": malformed labels row '" + line + "'");
      }
      adv.example_ids.push_back(id);
      adv.labels.push_back(label);
      adv.fooled_source.push_back(fooled != 0);
    }
    if (adv.labels.size() != shape.at(0)) throw FormatError(path.string() + ": label count does not match blobs");
    return adv;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace archsim::attacks
