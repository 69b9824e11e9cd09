#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "archsim/data.hpp"
#include "archsim/errors.hpp"
#include "archsim/nn/model.hpp"
#include "archsim/nn/spec.hpp"

namespace archsim::zoo {

/// IDX parse failures. kind() is one of "idx-truncated", "idx-magic",
/// "idx-count".
class IdxError : public Error {
 public:
  IdxError(std::string kind, const std::string& message) : Error(std::move(kind), message) {}
};

/// Reads an IDX image file (magic 0x00000803, big-endian dims) and a label
/// file (0x00000801). Pixels are scaled to [0,1]. Every example is tagged
/// with `split`.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split = Split::kTrain,
                 std::string name = "idx");
/// Train and eval file pairs merged into one dataset.
Dataset load_idx_pair(const std::filesystem::path& train_images, const std::filesystem::path& train_labels,
                      const std::filesystem::path& eval_images, const std::filesystem::path& eval_labels,
                      std::string name = "idx");

/// Writes IDX files; used for fixtures and round trips.
void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

inline constexpr const char* kSynthFormat = "archsim-synth/1";

struct SynthRecipe {
  std::uint64_t seed = 0;
  std::size_t num_classes = 10;
  std::size_t per_class = 600;
  std::size_t resolution = 32;
  double eval_fraction = 0.5;  // share of each class tagged eval
  /// Variant 0 is the main dataset; other values shift the texture
  /// frequencies and shape sizes to give a related second dataset.
  int variant = 0;

  std::string to_json() const;
  static SynthRecipe from_json(const std::string& text);
};

/// Procedural grayscale dataset. Class c draws shape c / 2 (disk, square,
/// triangle, cross, ring, ...) filled with a grating whose frequency is low
/// for even c and high for odd c, at a random position, size, angle and
/// phase, plus pixel noise.
Dataset synth_shapes(const SynthRecipe& recipe);

/// Reads a dataset reference: a `archsim-synth/1` recipe JSON file, or an
/// IDX reference JSON {"format":"idx","train-images",...}.
Dataset load_dataset(const std::filesystem::path& path);

struct ZooEntry {
  nn::ModelSpec spec;
  nn::TrainConfig train;
  std::string family;
  std::string variation;  // "seed", "hparam" or "regime"
};

struct ZooManifest {
  std::string dataset;  // recipe JSON text
  std::vector<ZooEntry> entries;
  double accuracy_floor = 0.85;
  double accuracy_band = 0.10;

  std::string to_json() const;
  static ZooManifest from_json(const std::string& text);
  void validate() const;
};

/// Family names of the desk zoo.
std::vector<std::string> family_names();
/// One model of the given family at the given input resolution.
nn::ModelSpec family_spec(const std::string& family, std::size_t resolution, std::size_t channels,
                          std::size_t num_classes);

/// Default desk zoo: every family with variants base, seed (new init),
/// hparam (ten times the weight decay, twice the epochs).
ZooManifest default_manifest(std::size_t variants_per_family = 3, std::uint64_t seed = 0);

struct ZooReport {
  struct Row {
    std::string name;
    std::string family;
    std::string variation;
    double eval_accuracy = 0.0;
    bool cached = false;
    bool accepted = false;
    std::string reason;
  };
  std::vector<Row> rows;
  std::string to_json() const;
};

struct BuildResult {
  std::vector<nn::Model> models;
  ZooReport report;
};

/// Trains or loads each entry (cache keyed by spec, config and dataset),
/// then drops models under the accuracy floor and, if needed, the lowest
/// models until the rest fit in the accuracy band.
BuildResult build_zoo(const ZooManifest& manifest, const Dataset& data,
                      const std::optional<std::filesystem::path>& cache_dir, unsigned threads = 1);

/// Cache file for an entry.
std::filesystem::path cache_path(const std::filesystem::path& cache_dir, const ZooEntry& entry,
                                 const std::string& dataset_key);

}  // namespace archsim::zoo
