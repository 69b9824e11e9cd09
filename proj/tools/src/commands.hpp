#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "archsim/arch_record.hpp"
#include "archsim/attacks/attack.hpp"
#include "archsim/data.hpp"
#include "archsim/errors.hpp"
#include "archsim/nn/model.hpp"

namespace archsim::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

/// A required upstream file or directory is absent.
class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(const fs::path& path)
      : Error("missing-artifact", "missing artifact: " + path.string()) {}
};

struct Global {
  std::uint64_t seed = 0;
  fs::path out_dir = "archsim-out";
  unsigned threads = 1;
  std::string format = "json";  // csv | json | svg
};

/// What a stage reports back for run.json.
struct RunRecord {
  ordered_json config = ordered_json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
};

struct AttackFlags {
  std::string method = "pgd";
  std::string epsilon = "8/255";
  double step = 0.1;
  int iterations = 50;
  double momentum = 1.0;
  attacks::AttackConfig resolve(std::uint64_t seed) const;
  ordered_json to_json() const;
};

/// "8/255" or a decimal.
double parse_fraction(const std::string& text);

struct TrainZooOptions {
  std::optional<fs::path> manifest;
  std::optional<fs::path> dataset;
  std::size_t variants = 3;
  std::optional<fs::path> cache_dir;  // default <out-dir>/cache
  bool no_cache = false;
};
void train_zoo(const Global& g, const TrainZooOptions& o, RunRecord& rec);

struct AttackOptions {
  std::optional<fs::path> zoo;
  std::string model;
  AttackFlags attack;
  double eval_fraction = 0.10;
};
void attack(const Global& g, const AttackOptions& o, RunRecord& rec);

struct SatMatrixOptions {
  std::optional<fs::path> zoo;
  AttackFlags attack;
  double eval_fraction = 0.10;
  double epsilon_floor = 0.01;
};
void sat_matrix(const Global& g, const SatMatrixOptions& o, RunRecord& rec);

struct ClusterOptions {
  std::optional<fs::path> sat;
  std::size_t k = 10;
  int restarts = 100;
  std::string adjacency = "percent";  // percent | shifted-log
};
void cluster(const Global& g, const ClusterOptions& o, RunRecord& rec);

struct ImportanceOptions {
  std::optional<fs::path> sat;
  std::optional<fs::path> zoo;
  int stages = 500;
  int max_depth = 12;
  std::size_t min_samples_split = 4;
  std::size_t min_samples_leaf = 1;
  double learning_rate = 0.02;
  int repeats = 10;
};
void importance(const Global& g, const ImportanceOptions& o, RunRecord& rec);

struct KeywordsOptions {
  std::optional<fs::path> clusters;
  std::optional<fs::path> zoo;
  std::size_t top_k = 5;
};
void keywords(const Global& g, const KeywordsOptions& o, RunRecord& rec);

struct EnsembleOptions {
  std::optional<fs::path> zoo;
  std::optional<fs::path> sat;
  std::optional<fs::path> clusters;
  std::vector<std::size_t> sizes{2, 3};
  std::size_t trials = 100;
  std::size_t orders = 20;  // random member orders for the all-wrong curve
};
void ensemble(const Global& g, const EnsembleOptions& o, RunRecord& rec);

struct DistillOptions {
  std::optional<fs::path> zoo;
  std::string student = "mlp";
  int epochs = 10;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  AttackFlags attack;
  double eval_fraction = 0.10;
};
void distill(const Global& g, const DistillOptions& o, RunRecord& rec);

struct BoundaryOptions {
  std::size_t per_family = 3;
  std::size_t points = 2000;
  std::size_t grid = 200;
  std::size_t triplets = 50;
  std::size_t triplet_grid = 12;
  std::size_t resamples = 10;
  double epsilon_scale = 2.0;
  int attack_iterations = 20;
  bool min_flip = true;
  bool stability = false;
};
void boundary_lab(const Global& g, const BoundaryOptions& o, RunRecord& rec);

struct ReportOptions {
  std::optional<fs::path> sat;
  std::optional<fs::path> clusters;
  std::optional<fs::path> keywords;
  std::optional<fs::path> importance;
  std::optional<fs::path> ensemble;
};
void report(const Global& g, const ReportOptions& o, RunRecord& rec);

/// Stage output directory under the run root.
fs::path stage_dir(const Global& g, const std::string& command);

// Zoo directory written by train-zoo.
inline constexpr const char* kZooIndexFormat = "archsim-zoo-index/1";

struct ZooIndexEntry {
  std::string name, family, variation;
  fs::path file;  // relative to the zoo directory
  double eval_accuracy = 0.0;
  features::ArchFeatureRecord record;
};
struct ZooIndex {
  fs::path dir;
  std::vector<ZooIndexEntry> models;
  std::map<std::string, features::ArchFeatureRecord> records() const;
};
ZooIndex load_zoo_index(const fs::path& dir);
std::vector<nn::Model> load_zoo_models(const ZooIndex& index);
Dataset load_zoo_dataset(const ZooIndex& index);

}  // namespace archsim::cli
