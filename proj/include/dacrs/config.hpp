#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace dacrs {

enum class Activation { relu, identity };

struct ModelConfig {
  int d = 32;        // entity embedding width
  int d_llm = 128;   // dialogue embedding width
  int rgcn_layers = 1;
  int heads = 1;
  Activation activation = Activation::relu;
  std::string encoder = "hashed";  // hashed | http
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double alpha = 1.0;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch_size = 128;
  int epochs = 50;
  double substitution_rate = 0.2;
  double augmentation_rate = 0.2;
  std::string stage1 = "off";  // off | on | fixtures
  std::string fixtures_dir = "fixtures";
  std::size_t entity_negatives = 0;  // 0 = exact softmax over all entities
  double holdout_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Flat JSON object holding both model and training keys. Unknown keys are
/// rejected so that typos do not silently fall back to defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& flat);

}  // namespace dacrs
