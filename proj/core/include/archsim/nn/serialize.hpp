#pragma once

#include <filesystem>
#include <string>

#include "archsim/nn/model.hpp"
#include "archsim/nn/spec.hpp"

namespace archsim::nn {

inline constexpr const char* kModelFormat = "archsim-model/1";

/// ModelSpec <-> JSON text. Layer entries carry "kind" plus the fields that
/// differ from their defaults; arch features are keyed by component name.
std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& text);

/// TrainConfig <-> JSON text. The teacher is recorded by name only and is
/// not restored.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

/// Writes `<path>` (JSON header: format, spec, training meta, weight
/// manifest) and `<path>.f32` (little-endian weight blob).
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// Canonical byte serialization used to compare and hash models.
std::string model_header_json(const Model& model);

}  // namespace archsim::nn
