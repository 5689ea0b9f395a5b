#pragma once

// Versioned JSON files for trained models and datasets. Doubles are written
// in shortest round-trip form, so a load reproduces every value bit-for-bit.

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "cfglearn/logreg.hpp"
#include "cfglearn/pipeline.hpp"

namespace cfglearn {

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;

struct StoredModel {
  Variant variant = Variant::pao;
  /// Feature dimension t; input_dim is t + s (PaO) or t + 1 (PaI).
  std::size_t feature_dim = 0;
  /// One output for PaO, s outputs for PaI. Weights act on raw inputs.
  MultiOutputModel model;
  TrainConfig train_config;
  /// Standardisation used while training; already folded into the weights.
  std::optional<FeatureScaling> feature_scaling;
  std::uint64_t master_seed = 0;

  const LinearModel& pao() const;
};

nlohmann::json model_to_json(const StoredModel& m);
StoredModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const StoredModel& m);
StoredModel load_model(const std::filesystem::path& path);

nlohmann::json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace cfglearn
