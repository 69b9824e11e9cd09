#include "archsim/zoo/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "archsim/io/files.hpp"
#include "archsim/log.hpp"
#include "archsim/nn/serialize.hpp"
#include "archsim/parallel.hpp"
#include "archsim/rng.hpp"

namespace archsim::zoo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

struct IdxImages {
  std::size_t n = 0, rows = 0, cols = 0;
  std::vector<float> pixels;
};

IdxImages read_images(const fs::path& path) {
  const auto b = io::read_bytes(path);
  if (b.size() < 16) throw IdxError("idx-truncated", path.string() + ": header shorter than 16 bytes");
  const std::uint32_t magic = read_be32(b, 0);
  if (magic != kImageMagic) throw IdxError("idx-magic", path.string() + ": not an IDX image file (magic " + std::to_string(magic) + ")");
  IdxImages out;
  out.n = read_be32(b, 4);
  out.rows = read_be32(b, 8);
  out.cols = read_be32(b, 12);
  const std::size_t need = out.n * out.rows * out.cols;
  if (b.size() < 16 + need) {
    throw IdxError("idx-truncated", path.string() + ": expected " + std::to_string(need) + " pixel bytes, found " +
                                        std::to_string(b.size() - 16));
  }
  out.pixels.resize(need);
  for (std::size_t i = 0; i < need; ++i) out.pixels[i] = static_cast<float>(b[16 + i]) / 255.0f;
  return out;
}

std::vector<int> read_labels(const fs::path& path) {
  const auto b = io::read_bytes(path);
  if (b.size() < 8) throw IdxError("idx-truncated", path.string() + ": header shorter than 8 bytes");
  const std::uint32_t magic = read_be32(b, 0);
  if (magic != kLabelMagic) throw IdxError("idx-magic", path.string() + ": not an IDX label file (magic " + std::to_string(magic) + ")");
  const std::size_t n = read_be32(b, 4);
  if (b.size() < 8 + n) throw IdxError("idx-truncated", path.string() + ": expected " + std::to_string(n) + " labels");
  return std::vector<int>(b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

}  // namespace

Dataset load_idx(const fs::path& images, const fs::path& labels, Split split, std::string name) {
  const auto im = read_images(images);
  auto lab = read_labels(labels);
  if (lab.size() != im.n) {
    throw IdxError("idx-count", "image file holds " + std::to_string(im.n) + " examples but label file holds " +
                                    std::to_string(lab.size()));
  }
  if (im.n == 0) throw ValidationError("IDX dataset is empty");
  Dataset d;
  d.name = std::move(name);
  d.images = Tensor::from_data({im.n, im.rows, im.cols, 1}, im.pixels);
  d.num_classes = static_cast<std::size_t>(*std::max_element(lab.begin(), lab.end())) + 1;
  d.labels = std::move(lab);
  d.split.assign(im.n, split);
  d.provenance = json{{"format", "idx"}, {"images", images.string()}, {"labels", labels.string()}}.dump();
  d.validate();
  return d;
}

Dataset load_idx_pair(const fs::path& train_images, const fs::path& train_labels, const fs::path& eval_images,
                      const fs::path& eval_labels, std::string name) {
  Dataset a = load_idx(train_images, train_labels, Split::kTrain, name);
  Dataset b = load_idx(eval_images, eval_labels, Split::kEval, name);
  if (a.height() != b.height() || a.width() != b.width()) throw ValidationError("train and eval IDX shapes differ");
  std::vector<float> px(a.images.values());
  px.insert(px.end(), b.images.values().begin(), b.images.values().end());
  Dataset d;
  d.name = std::move(name);
  d.images = Tensor::from_data({a.size() + b.size(), a.height(), a.width(), 1}, std::move(px));
  d.labels = a.labels;
  d.labels.insert(d.labels.end(), b.labels.begin(), b.labels.end());
  d.split = a.split;
  d.split.insert(d.split.end(), b.split.begin(), b.split.end());
  d.num_classes = std::max(a.num_classes, b.num_classes);
  d.provenance = json{{"format", "idx"},
                      {"train-images", train_images.string()},
                      {"train-labels", train_labels.string()},
                      {"eval-images", eval_images.string()},
                      {"eval-labels", eval_labels.string()}}
                     .dump();
  return d;
}

void write_idx(const Dataset& data, const fs::path& images, const fs::path& labels) {
  if (data.channels() != 1) throw ValidationError("IDX holds single-channel images only");
  std::vector<std::uint8_t> im, lab;
  put_be32(im, kImageMagic);
  put_be32(im, static_cast<std::uint32_t>(data.size()));
  put_be32(im, static_cast<std::uint32_t>(data.height()));
  put_be32(im, static_cast<std::uint32_t>(data.width()));
  for (float v : data.images.data()) im.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) lab.push_back(static_cast<std::uint8_t>(l));
  io::write_atomic(images, std::span<const std::uint8_t>(im));
  io::write_atomic(labels, std::span<const std::uint8_t>(lab));
}

std::string SynthRecipe::to_json() const {
  return json{{"format", kSynthFormat},
              {"seed", seed},
              {"num-classes", num_classes},
              {"per-class", per_class},
              {"resolution", resolution},
              {"eval-fraction", eval_fraction},
              {"variant", variant}}
      .dump();
}

SynthRecipe SynthRecipe::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("synthetic recipe: ") + e.what());
  }
  if (j.value("format", std::string()) != kSynthFormat) {
    throw FormatError("synthetic recipe: expected format " + std::string(kSynthFormat));
  }
  SynthRecipe r;
  r.seed = j.value("seed", r.seed);
  r.num_classes = j.value("num-classes", r.num_classes);
  r.per_class = j.value("per-class", r.per_class);
  r.resolution = j.value("resolution", r.resolution);
  r.eval_fraction = j.value("eval-fraction", r.eval_fraction);
  r.variant = j.value("variant", r.variant);
  return r;
}

namespace {

bool inside_shape(int shape, double u, double v) {
  const double r2 = u * u + v * v;
  switch (shape) {
    case 0:
      return r2 <= 1.0;
    case 1:
      return std::max(std::abs(u), std::abs(v)) <= 0.8;
    case 2:
      return v >= -0.5 && v <= 1.0 - std::sqrt(3.0) * std::abs(u);
    case 3:
      return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
    default:
      return r2 >= 0.3 && r2 <= 1.0;
  }
}

}  // namespace

Dataset synth_shapes(const SynthRecipe& r) {
  if (r.resolution < 16) throw ValidationError("synthetic resolution must be at least 16");
  if (r.num_classes < 2 || r.num_classes > 10) throw ValidationError("synthetic num-classes must lie in [2,10]");
  if (r.per_class == 0) throw ValidationError("synthetic per-class must be positive");
  if (!(r.eval_fraction >= 0.0 && r.eval_fraction < 1.0)) throw ValidationError("synthetic eval-fraction must lie in [0,1)");
  constexpr double kPi = 3.14159265358979323846;
  const std::size_t n = r.num_classes * r.per_class, res = r.resolution;
  const std::size_t eval_per_class = static_cast<std::size_t>(std::llround(r.eval_fraction * static_cast<double>(r.per_class)));
  const double low = r.variant == 0 ? 0.06 : 0.09;
  const double high = r.variant == 0 ? 0.25 : 0.2;
  const double size_lo = r.variant == 0 ? 0.3 : 0.26, size_hi = r.variant == 0 ? 0.38 : 0.34;

  Dataset d;
  d.name = "synth-shapes";
  d.num_classes = r.num_classes;
  d.provenance = r.to_json();
  d.images = Tensor({n, res, res, 1});
  d.labels.resize(n);
  d.split.resize(n);
  const double s = static_cast<double>(res);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % r.num_classes;
    d.labels[i] = static_cast<int>(c);
    d.split[i] = i / r.num_classes >= r.per_class - eval_per_class ? Split::kEval : Split::kTrain;
    Rng rng(derive_seed(r.seed, i), "synth");
    const int shape = static_cast<int>(c / 2);
    const double freq = c % 2 ? high : low;
    const double cx = s / 2 + rng.uniform(-0.06, 0.06) * s, cy = s / 2 + rng.uniform(-0.06, 0.06) * s;
    const double radius = rng.uniform(size_lo, size_hi) * s;
    const double rot = rng.uniform(-0.3, 0.3);
    const double grating = rng.uniform(0.0, kPi), phase = rng.uniform(0.0, 2 * kPi);
    const double background = rng.uniform(0.0, 0.15);
    const double cr = std::cos(rot), sr = std::sin(rot), cg = std::cos(grating), sg = std::sin(grating);
    float* px = d.images.raw() + i * res * res;
    for (std::size_t y = 0; y < res; ++y) {
      for (std::size_t x = 0; x < res; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        const double u = (cr * dx + sr * dy) / radius, v = (-sr * dx + cr * dy) / radius;
        double val = background;
        if (inside_shape(shape, u, v)) {
          val = 0.6 + 0.3 * std::sin(2 * kPi * freq * (cg * dx + sg * dy) + phase);
        }
        val += 0.05 * rng.normal();
        px[y * res + x] = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
  return d;
}

Dataset load_dataset(const fs::path& path) {
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const std::string format = j.value("format", std::string());
  if (format == kSynthFormat) return synth_shapes(SynthRecipe::from_json(text));
  if (format == "idx") {
    const fs::path base = path.parent_path();
    auto at = [&](const char* key) {
      if (!j.contains(key)) throw FormatError(path.string() + ": missing '" + key + "'");
      return base / j[key].get<std::string>();
    };
    return load_idx_pair(at("train-images"), at("train-labels"), at("eval-images"), at("eval-labels"),
                         j.value("name", std::string("idx")));
  }
  throw FormatError(path.string() + ": unknown dataset format '" + format + "'");
}

std::string ZooManifest::to_json() const {
  json entries_j = json::array();
  for (const auto& e : entries) {
    entries_j.push_back({{"spec", json::parse(nn::spec_to_json(e.spec))},
                         {"train", json::parse(nn::train_config_to_json(e.train))},
                         {"family", e.family},
                         {"variation", e.variation}});
  }
  return json{{"format", "archsim-zoo/1"},
              {"dataset", json::parse(dataset)},
              {"accuracy-floor", accuracy_floor},
              {"accuracy-band", accuracy_band},
              {"entries", entries_j}}
             .dump(2) +
         "\n";
}

ZooManifest ZooManifest::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("zoo manifest: ") + e.what());
  }
  if (j.value("format", std::string()) != "archsim-zoo/1") throw FormatError("zoo manifest: expected format archsim-zoo/1");
  ZooManifest m;
  try {
    m.dataset = j.at("dataset").dump();
    m.accuracy_floor = j.value("accuracy-floor", m.accuracy_floor);
    m.accuracy_band = j.value("accuracy-band", m.accuracy_band);
    for (const auto& e : j.at("entries")) {
      ZooEntry z{nn::spec_from_json(e.at("spec").dump()), nn::train_config_from_json(e.at("train").dump()),
                 e.value("family", std::string()), e.value("variation", std::string("seed"))};
      if (z.spec.family.empty()) z.spec.family = z.family;
      m.entries.push_back(std::move(z));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("zoo manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void ZooManifest::validate() const {
  if (entries.empty()) throw ValidationError("zoo manifest has no entries");
  if (!(accuracy_floor >= 0.0 && accuracy_floor <= 1.0)) throw ValidationError("accuracy-floor must lie in [0,1]");
  if (!(accuracy_band > 0.0)) throw ValidationError("accuracy-band must be positive");
  std::vector<std::string> names;
  for (const auto& e : entries) {
    if (e.variation != "seed" && e.variation != "hparam" && e.variation != "regime") {
      throw ValidationError("entry '" + e.spec.name + "': variation must be seed, hparam or regime");
    }
    nn::validate(e.spec);
    e.train.validate();
    names.push_back(e.spec.name);
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) throw ValidationError("zoo manifest has duplicate model names");
}

std::vector<std::string> family_names() { return {"mlp", "cnn-bn-relu", "cnn-patchify-gelu", "se-cnn", "mini-attention"}; }

nn::ModelSpec family_spec(const std::string& family, std::size_t resolution, std::size_t channels, std::size_t num_classes) {
  using nn::LayerKind;
  using nn::LayerSpec;
  nn::ModelSpec s;
  s.name = family;
  s.family = family;
  s.input = {resolution, resolution, channels};
  s.num_classes = num_classes;
  auto& f = s.arch_features;
  f[features::kInputResolution] = std::to_string(resolution) + "x" + std::to_string(resolution);
  f[features::kHierarchical] = "No";
  f[features::kPoolingAtStem] = "No";
  f[features::kSelfAttention2d] = "No";
  f[features::kChannelWiseAttention] = "No";
  f[features::kDepthwiseConv] = "No";
  f[features::kGroupConv] = "No";
  f[features::kFinalPooling] = "GAP";
  f[features::kCwAttentionLocation] = "-";
  const auto of = [](LayerKind k) { return LayerSpec::of(k); };

  if (family == "mlp") {
    s.layers = {of(LayerKind::kFlatten), LayerSpec::dense(256), of(LayerKind::kRelu), LayerSpec::dense(128),
                of(LayerKind::kRelu), LayerSpec::dense(num_classes)};
    f[features::kBaseArchitecture] = "MLP";
    f[features::kStemLayer] = "none";
    f[features::kNormalization] = "none";
    f[features::kActivation] = "ReLU";
    f[features::kFinalPooling] = "Flatten";
  } else if (family == "cnn-bn-relu") {
    s.layers = {LayerSpec::conv(8, 3, 1, 1), of(LayerKind::kBatchNorm), of(LayerKind::kRelu),
                LayerSpec::pool(LayerKind::kMaxPool, 2),
                LayerSpec::conv(16, 3, 1, 1), of(LayerKind::kBatchNorm), of(LayerKind::kRelu),
                LayerSpec::pool(LayerKind::kMaxPool, 2),
                LayerSpec::conv(32, 3, 1, 1), of(LayerKind::kBatchNorm), of(LayerKind::kRelu),
                of(LayerKind::kGlobalAvgPool), LayerSpec::dense(num_classes)};
    f[features::kBaseArchitecture] = "CNN";
    f[features::kStemLayer] = "3s1";
    f[features::kNormalization] = "BN";
    f[features::kHierarchical] = "Yes";
    f[features::kActivation] = "ReLU";
    f[features::kPoolingAtStem] = "Yes";
  } else if (family == "cnn-patchify-gelu") {
    const auto block = {of(LayerKind::kResidualBegin), of(LayerKind::kLayerNorm), LayerSpec::conv(32, 3, 1, 1, 32),
                        of(LayerKind::kGelu), LayerSpec::conv(32, 1), of(LayerKind::kResidualEnd)};
    s.layers = {LayerSpec::patchify(32, 4)};
    s.layers.insert(s.layers.end(), block);
    s.layers.insert(s.layers.end(), block);
    s.layers.insert(s.layers.end(), {of(LayerKind::kLayerNorm), LayerSpec::conv(48, 1), of(LayerKind::kGelu),
                                     of(LayerKind::kGlobalAvgPool), LayerSpec::dense(num_classes)});
    f[features::kBaseArchitecture] = "CNN";
    f[features::kStemLayer] = "4s4";
    f[features::kNormalization] = "LN";
    f[features::kActivation] = "GeLU";
    f[features::kDepthwiseConv] = "Yes";
  } else if (family == "se-cnn") {
    s.layers = {LayerSpec::conv(16, 3, 2, 1), of(LayerKind::kBatchNorm), of(LayerKind::kSilu),
                LayerSpec::conv(32, 3, 2, 1, 2), of(LayerKind::kBatchNorm), of(LayerKind::kSilu),
                LayerSpec::squeeze_excite(4),
                LayerSpec::conv(32, 3, 1, 1), of(LayerKind::kBatchNorm), of(LayerKind::kSilu),
                of(LayerKind::kGlobalAvgPool), LayerSpec::dense(num_classes)};
    f[features::kBaseArchitecture] = "CNN";
    f[features::kStemLayer] = "3s2";
    f[features::kNormalization] = "BN";
    f[features::kHierarchical] = "Yes";
    f[features::kActivation] = "SiLU";
    f[features::kChannelWiseAttention] = "Yes";
    f[features::kGroupConv] = "Yes";
    f[features::kCwAttentionLocation] = "Middle";
  } else if (family == "mini-attention") {
    s.layers = {LayerSpec::patchify(32, 4),
                of(LayerKind::kResidualBegin), LayerSpec::conv(32, 3, 1, 1, 32), of(LayerKind::kResidualEnd),
                of(LayerKind::kResidualBegin), of(LayerKind::kLayerNorm), LayerSpec::attention(),
                of(LayerKind::kResidualEnd),
                of(LayerKind::kResidualBegin), of(LayerKind::kLayerNorm), LayerSpec::dense(64), of(LayerKind::kGelu), LayerSpec::dense(32),
                of(LayerKind::kResidualEnd),
                of(LayerKind::kLayerNorm), of(LayerKind::kGlobalAvgPool), LayerSpec::dense(num_classes)};
    f[features::kBaseArchitecture] = "Transformer";
    f[features::kStemLayer] = "4s4";
    f[features::kNormalization] = "LN";
    f[features::kActivation] = "GeLU";
    f[features::kSelfAttention2d] = "Yes";
  } else {
    throw ValidationError("unknown zoo family '" + family + "'");
  }
  nn::validate(s);
  return s;
}

ZooManifest default_manifest(std::size_t variants_per_family, std::uint64_t seed) {
  if (variants_per_family == 0 || variants_per_family > 4) throw ValidationError("variants per family must lie in [1,4]");
  SynthRecipe recipe;
  recipe.seed = seed;
  ZooManifest m;
  m.dataset = recipe.to_json();
  for (const auto& family : family_names()) {
    nn::TrainConfig base;
    base.seed = derive_seed(seed, family);
    base.epochs = 10;
    base.learning_rate = 0.05;
    base.batch_size = 32;
    if (family == "cnn-patchify-gelu" || family == "mini-attention") {
      base.learning_rate = 0.02;
      base.batch_size = 16;
    }
    for (std::size_t v = 0; v < variants_per_family; ++v) {
      ZooEntry e{family_spec(family, recipe.resolution, 1, recipe.num_classes), base, family, "seed"};
      switch (v) {
        case 0:
          e.spec.name = family + "-a";
          break;
        case 1:
          e.spec.name = family + "-b";
          e.train.seed = derive_seed(base.seed, 1);
          break;
        case 2:
          e.spec.name = family + "-hp";
          e.variation = "hparam";
          e.train.seed = derive_seed(base.seed, 2);
          e.train.weight_decay = 5e-3;
          e.train.epochs = 2 * base.epochs;
          break;
        default:
          e.spec.name = family + "-reg";
          e.variation = "regime";
          e.train.seed = derive_seed(base.seed, 3);
          e.train.schedule = nn::Schedule::kStepDecay;
          e.train.batch_size = 128;
          break;
      }
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

std::string ZooReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"name", r.name},
                      {"family", r.family},
                      {"variation", r.variation},
                      {"eval-accuracy", r.eval_accuracy},
                      {"accepted", r.accepted},
                      {"reason", r.reason}});
  }
  return json{{"models", rows_j}}.dump(2) + "\n";
}

fs::path cache_path(const fs::path& cache_dir, const ZooEntry& entry, const std::string& dataset_key) {
  const std::string key = nn::spec_to_json(entry.spec) + nn::train_config_to_json(entry.train) + dataset_key;
  return cache_dir / (entry.spec.name + "-" + io::content_hash(key) + ".model.json");
}

BuildResult build_zoo(const ZooManifest& manifest, const Dataset& data, const std::optional<fs::path>& cache_dir,
                      unsigned threads) {
  manifest.validate();
  const std::size_t n = manifest.entries.size();
  std::vector<std::optional<nn::Model>> trained(n);
  std::vector<bool> cached(n, false);
  parallel_for(n, threads, [&](std::size_t i) {
    const ZooEntry& e = manifest.entries[i];
    if (cache_dir) {
      const fs::path p = cache_path(*cache_dir, e, data.provenance);
      if (fs::exists(p)) {
        trained[i].emplace(nn::load_model(p));
        cached[i] = true;
        return;
      }
    }
    nn::ModelSpec spec = e.spec;
    if (spec.family.empty()) spec.family = e.family;
    trained[i].emplace(nn::train(spec, data, e.train));
    if (cache_dir) nn::save_model(*trained[i], cache_path(*cache_dir, e, data.provenance));
  });

  BuildResult out;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = *trained[i];
    ZooReport::Row row{m.name(), manifest.entries[i].family, manifest.entries[i].variation, m.meta().eval_accuracy,
                       cached[i], true, ""};
    if (row.eval_accuracy < manifest.accuracy_floor) {
      row.accepted = false;
      row.reason = "eval accuracy " + io::format_number(row.eval_accuracy) + " below floor " +
                   io::format_number(manifest.accuracy_floor);
      warn("zoo: excluding " + row.name + ": " + row.reason);
    } else {
      kept.push_back(i);
    }
    out.report.rows.push_back(std::move(row));
  }
  // Drop the least accurate members until the rest fit in the band.
  std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    const double x = out.report.rows[a].eval_accuracy, y = out.report.rows[b].eval_accuracy;
    return x != y ? x > y : a < b;
  });
  while (kept.size() > 1 &&
         out.report.rows[kept.front()].eval_accuracy - out.report.rows[kept.back()].eval_accuracy > manifest.accuracy_band) {
    auto& row = out.report.rows[kept.back()];
    row.accepted = false;
    row.reason = "outside the accuracy band";
    warn("zoo: excluding " + row.name + ": " + row.reason);
    kept.pop_back();
  }
  std::sort(kept.begin(), kept.end());
  for (auto i : kept) out.models.push_back(std::move(*trained[i]));
  return out;
}

}  // namespace archsim::zoo
