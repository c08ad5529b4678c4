#include "dacrs/config.hpp"

#include <fstream>
#include <set>

#include "dacrs/errors.hpp"

namespace dacrs {

using nlohmann::json;

namespace {

const std::set<std::string> kModelKeys = {"d", "d_llm", "rgcn_layers", "heads",
                                          "activation", "encoder", "model_seed"};
const std::set<std::string> kTrainKeys = {
    "alpha",       "learning_rate",     "weight_decay",     "batch_size",
    "epochs",      "substitution_rate", "augmentation_rate", "stage1",
    "fixtures_dir", "entity_negatives", "holdout_fraction", "seed"};

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void ModelConfig::validate() const {
  if (d < 1 || d_llm < 1) throw ConfigError("d and d_llm must be >= 1");
  if (rgcn_layers < 1) throw ConfigError("rgcn_layers must be >= 1");
  if (heads < 1 || d % heads != 0) throw ConfigError("heads must divide d");
}

void TrainConfig::validate() const {
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (learning_rate < 0.0 || weight_decay < 0.0) throw ConfigError("learning rate and weight decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (substitution_rate < 0.0 || substitution_rate > 1.0) throw ConfigError("substitution_rate must be in [0,1]");
  if (augmentation_rate < 0.0 || augmentation_rate > 1.0) throw ConfigError("augmentation_rate must be in [0,1]");
  if (stage1 != "off" && stage1 != "on" && stage1 != "fixtures") throw ConfigError("stage1 must be off, on or fixtures");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw ConfigError("holdout_fraction must be in [0,1)");
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"d", c.d},
       {"d_llm", c.d_llm},
       {"rgcn_layers", c.rgcn_layers},
       {"heads", c.heads},
       {"activation", c.activation == Activation::relu ? "relu" : "identity"},
       {"encoder", c.encoder},
       {"model_seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  read(j, "d", c.d);
  read(j, "d_llm", c.d_llm);
  read(j, "rgcn_layers", c.rgcn_layers);
  read(j, "heads", c.heads);
  read(j, "encoder", c.encoder);
  read(j, "model_seed", c.seed);
  if (j.contains("activation")) {
    const auto a = j.at("activation").get<std::string>();
    if (a == "relu") {
      c.activation = Activation::relu;
    } else if (a == "identity") {
      c.activation = Activation::identity;
    } else {
      throw ConfigError("unknown activation '" + a + "'");
    }
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"alpha", c.alpha},
       {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"substitution_rate", c.substitution_rate},
       {"augmentation_rate", c.augmentation_rate},
       {"stage1", c.stage1},
       {"fixtures_dir", c.fixtures_dir},
       {"entity_negatives", c.entity_negatives},
       {"holdout_fraction", c.holdout_fraction},
       {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  read(j, "alpha", c.alpha);
  read(j, "learning_rate", c.learning_rate);
  read(j, "weight_decay", c.weight_decay);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "substitution_rate", c.substitution_rate);
  read(j, "augmentation_rate", c.augmentation_rate);
  read(j, "stage1", c.stage1);
  read(j, "fixtures_dir", c.fixtures_dir);
  read(j, "entity_negatives", c.entity_negatives);
  read(j, "holdout_fraction", c.holdout_fraction);
  read(j, "seed", c.seed);
}

RunConfig parse_run_config(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : flat.items()) {
    if (!kModelKeys.contains(key) && !kTrainKeys.contains(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  RunConfig run;
  try {
    flat.get_to(run.model);
    flat.get_to(run.train);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  run.model.validate();
  run.train.validate();
  return run;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return parse_run_config(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace dacrs
