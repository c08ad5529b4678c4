#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dacrs/kg.hpp"

namespace dacrs {

enum class Speaker { user, recommender };

struct Utterance {
  Speaker speaker = Speaker::user;
  std::string text;
  std::vector<EntityId> entities;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

/// Context prefix plus the entities of the next utterance.
struct TrainingSample {
  std::size_t dialogue_index = 0;
  std::size_t target_utterance = 0;
  std::vector<Utterance> context;
  std::vector<EntityId> context_entities;  // deduplicated, first-mention order
  std::vector<EntityId> targets;           // deduplicated, non-empty
};

struct TestSample : TrainingSample {
  std::vector<EntityId> target_items;
};

struct DialogueSet {
  std::vector<Dialogue> dialogues;
  std::size_t dropped_annotations = 0;  // entity URIs missing from the KG
};

struct CorpusStats {
  std::size_t num_dialogues = 0;
  std::size_t num_items = 0;
  std::size_t num_entities = 0;
  std::size_t num_interactions = 0;  // distinct (dialogue, item) mentions
  double density = 0.0;
};

/// One JSON record per line:
/// {"dialogue_id": ..., "utterances": [{"speaker", "text", "entities": [uri...]}]}
DialogueSet load_dialogues(std::istream& in, const Kg& kg);
DialogueSet load_dialogues_file(const std::filesystem::path& path, const Kg& kg);
void write_dialogues(const std::vector<Dialogue>& dialogues, const Kg& kg, std::ostream& out);
/// Parses a single dialogue record (the same schema as one corpus line).
Dialogue parse_dialogue_record(const std::string& json_text, const Kg& kg,
                               std::size_t* dropped = nullptr);

std::vector<TrainingSample> build_training_samples(const std::vector<Dialogue>& dialogues);
std::vector<TestSample> build_test_samples(const std::vector<Dialogue>& dialogues, const Kg& kg);

CorpusStats corpus_stats(const std::vector<Dialogue>& dialogues, const Kg& kg);

struct SyntheticSpec {
  int num_clusters = 4;
  int entities_per_cluster = 20;
  int items_per_cluster = 4;
  int dialogues = 400;
  int utterances_per_dialogue = 6;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  Kg kg;
  std::vector<Dialogue> dialogues;
  std::vector<int> cluster_of;  // per entity
};

/// Planted-preference corpus: dense intra-cluster communities with sparse
/// bridges, dialogues that stay inside one cluster, and a final recommender
/// utterance naming an item of that cluster.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Deterministic split: every k-th dialogue goes to test, k = round(1/fraction).
std::pair<std::vector<Dialogue>, std::vector<Dialogue>> split_dialogues(
    const std::vector<Dialogue>& dialogues, double test_fraction);

const char* speaker_name(Speaker s) noexcept;

}  // namespace dacrs
