#include "dacrs/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "dacrs/errors.hpp"
#include "dacrs/rng.hpp"

namespace dacrs {

using nlohmann::json;

const char* speaker_name(Speaker s) noexcept {
  return s == Speaker::user ? "user" : "recommender";
}

namespace {

Dialogue parse_record(const json& record, const Kg& kg, std::size_t& dropped) {
  Dialogue dialogue;
  const auto& id = record.at("dialogue_id");
  dialogue.id = id.is_string() ? id.get<std::string>() : id.dump();
  for (const auto& u : record.at("utterances")) {
    Utterance utt;
    const auto speaker = u.at("speaker").get<std::string>();
    if (speaker == "user") {
      utt.speaker = Speaker::user;
    } else if (speaker == "recommender") {
      utt.speaker = Speaker::recommender;
    } else {
      throw LoadError("unknown speaker '" + speaker + "'");
    }
    utt.text = u.at("text").get<std::string>();
    if (u.contains("entities")) {
      for (const auto& uri : u.at("entities")) {
        if (const auto entity = kg.find_uri(uri.get<std::string>())) {
          utt.entities.push_back(*entity);
        } else {
          ++dropped;
        }
      }
    }
    dialogue.utterances.push_back(std::move(utt));
  }
  if (dialogue.utterances.empty()) throw LoadError("dialogue has no utterances");
  return dialogue;
}

void append_unique(std::vector<EntityId>& out, std::unordered_set<EntityId>& seen,
                   const std::vector<EntityId>& ids) {
  for (const auto id : ids) {
    if (seen.insert(id).second) out.push_back(id);
  }
}

std::vector<EntityId> dedup(const std::vector<EntityId>& ids) {
  std::vector<EntityId> out;
  std::unordered_set<EntityId> seen;
  append_unique(out, seen, ids);
  return out;
}

}  // namespace

Dialogue parse_dialogue_record(const std::string& json_text, const Kg& kg, std::size_t* dropped) {
  std::size_t count = 0;
  try {
    auto dialogue = parse_record(json::parse(json_text), kg, count);
    if (dropped) *dropped += count;
    return dialogue;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed dialogue record: ") + e.what());
  }
}

DialogueSet load_dialogues(std::istream& in, const Kg& kg) {
  DialogueSet set;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      set.dialogues.push_back(parse_record(json::parse(line), kg, set.dropped_annotations));
    } catch (const json::exception& e) {
      throw LoadError("dialogue record " + std::to_string(record) + ": " + e.what());
    } catch (const LoadError& e) {
      throw LoadError("dialogue record " + std::to_string(record) + ": " + e.what());
    }
  }
  return set;
}

DialogueSet load_dialogues_file(const std::filesystem::path& path, const Kg& kg) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  return load_dialogues(in, kg);
}

void write_dialogues(const std::vector<Dialogue>& dialogues, const Kg& kg, std::ostream& out) {
  for (const auto& d : dialogues) {
    json record;
    record["dialogue_id"] = d.id;
    record["utterances"] = json::array();
    for (const auto& u : d.utterances) {
      json entities = json::array();
      for (const auto id : u.entities) entities.push_back(kg.entity(id).uri);
      record["utterances"].push_back(
          {{"speaker", speaker_name(u.speaker)}, {"text", u.text}, {"entities", entities}});
    }
    out << record.dump() << '\n';
  }
}

std::vector<TrainingSample> build_training_samples(const std::vector<Dialogue>& dialogues) {
  std::vector<TrainingSample> samples;
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    const auto& utts = dialogues[d].utterances;
    std::vector<EntityId> context_entities;
    std::unordered_set<EntityId> seen;
    for (std::size_t t = 0; t < utts.size(); ++t) {
      if (!utts[t].entities.empty()) {
        TrainingSample s;
        s.dialogue_index = d;
        s.target_utterance = t;
        s.context.assign(utts.begin(), utts.begin() + static_cast<std::ptrdiff_t>(t));
        s.context_entities = context_entities;
        s.targets = dedup(utts[t].entities);
        samples.push_back(std::move(s));
      }
      append_unique(context_entities, seen, utts[t].entities);
    }
  }
  return samples;
}

std::vector<TestSample> build_test_samples(const std::vector<Dialogue>& dialogues, const Kg& kg) {
  std::vector<TestSample> samples;
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    const auto& utts = dialogues[d].utterances;
    std::vector<EntityId> context_entities;
    std::unordered_set<EntityId> seen;
    for (std::size_t t = 0; t < utts.size(); ++t) {
      if (utts[t].speaker == Speaker::recommender) {
        std::vector<EntityId> items;
        for (const auto id : dedup(utts[t].entities)) {
          if (kg.is_item(id)) items.push_back(id);
        }
        if (!items.empty()) {
          TestSample s;
          s.dialogue_index = d;
          s.target_utterance = t;
          s.context.assign(utts.begin(), utts.begin() + static_cast<std::ptrdiff_t>(t));
          s.context_entities = context_entities;
          s.targets = dedup(utts[t].entities);
          s.target_items = std::move(items);
          samples.push_back(std::move(s));
        }
      }
      append_unique(context_entities, seen, utts[t].entities);
    }
  }
  return samples;
}

CorpusStats corpus_stats(const std::vector<Dialogue>& dialogues, const Kg& kg) {
  CorpusStats stats;
  stats.num_dialogues = dialogues.size();
  stats.num_items = kg.num_items();
  stats.num_entities = kg.num_entities();
  for (const auto& d : dialogues) {
    std::set<EntityId> items;
    for (const auto& u : d.utterances)
      for (const auto id : u.entities)
        if (kg.is_item(id)) items.insert(id);
    stats.num_interactions += items.size();
  }
  if (stats.num_dialogues > 0 && stats.num_items > 0) {
    stats.density = static_cast<double>(stats.num_interactions) /
                    (static_cast<double>(stats.num_dialogues) * static_cast<double>(stats.num_items));
  }
  return stats;
}

std::pair<std::vector<Dialogue>, std::vector<Dialogue>> split_dialogues(
    const std::vector<Dialogue>& dialogues, double test_fraction) {
  std::vector<Dialogue> train;
  std::vector<Dialogue> test;
  if (test_fraction <= 0.0) return {dialogues, {}};
  const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / test_fraction)));
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    ((i % stride) == stride - 1 ? test : train).push_back(dialogues[i]);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic planted-preference corpus

namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ra", "ven", "tor", "sil", "dra", "pe",
                                      "nu", "zor", "qui", "bel", "fa", "gri", "hol", "jun", "mar",
                                      "os", "tin", "vex", "wy", "yel", "cor", "dun", "el"};

std::string pseudo_word(Rng& rng, int syllables) {
  std::string word;
  for (int i = 0; i < syllables; ++i) {
    word += kSyllables[rng.uniform_index(std::size(kSyllables))];
  }
  return word;
}

std::string capitalized(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.uniform_index(v.size())];
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_clusters < 1 || spec.entities_per_cluster < 1 || spec.items_per_cluster < 1 ||
      spec.dialogues < 1 || spec.utterances_per_dialogue < 1) {
    throw ArgumentError("synthetic spec sizes must be positive");
  }
  Rng rng(spec.seed);
  const auto clusters = static_cast<std::size_t>(spec.num_clusters);

  std::vector<Entity> entities;
  std::vector<int> cluster_of;
  std::vector<std::vector<EntityId>> plain(clusters);
  std::vector<std::vector<EntityId>> items(clusters);
  std::unordered_set<std::string> used_names;
  const auto fresh_name = [&](bool item) {
    while (true) {
      auto name = capitalized(pseudo_word(rng, 2)) + " " + capitalized(pseudo_word(rng, 2));
      if (item) name = "The " + name;
      if (used_names.insert(to_lower_ascii(name)).second) return name;
    }
  };
  std::unordered_set<std::string> used_words;
  std::vector<std::vector<std::string>> vocab(clusters);
  for (std::size_t c = 0; c < clusters; ++c) {
    while (vocab[c].size() < 6) {
      auto w = pseudo_word(rng, 3);
      if (used_words.insert(w).second) vocab[c].push_back(std::move(w));
    }
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    for (int i = 0; i < spec.entities_per_cluster + spec.items_per_cluster; ++i) {
      const bool item = i >= spec.entities_per_cluster;
      const auto id = static_cast<EntityId>(entities.size());
      entities.push_back({"syn:e" + std::to_string(id), fresh_name(item), item});
      cluster_of.push_back(static_cast<int>(c));
      (item ? items[c] : plain[c]).push_back(id);
    }
  }

  constexpr RelationId kRelated = 0, kFeatures = 1, kGenre = 2;
  std::vector<Triple> triples;
  std::vector<std::vector<EntityId>> features(entities.size());
  for (std::size_t c = 0; c < clusters; ++c) {
    const auto& members = plain[c];
    if (members.size() > 1) {
      for (const auto e : members) {
        for (int k = 0; k < 2; ++k) {
          auto other = pick(members, rng);
          if (other != e) triples.push_back({e, kRelated, other});
        }
      }
    }
    for (const auto item : items[c]) {
      std::vector<EntityId> pool = members;
      rng.shuffle(pool.begin(), pool.end());
      pool.resize(std::min<std::size_t>(3, pool.size()));
      for (const auto e : pool) triples.push_back({item, kFeatures, e});
      features[static_cast<std::size_t>(item)] = pool;
      triples.push_back({item, kGenre, members.front()});
    }
  }
  if (clusters > 1) {
    for (std::size_t c = 0; c < clusters; ++c) {
      triples.push_back({pick(plain[c], rng), kRelated, pick(plain[(c + 1) % clusters], rng)});
    }
  }

  SyntheticData data{Kg(std::move(entities), {"related_to", "features", "genre"}, std::move(triples)),
                     {},
                     std::move(cluster_of)};
  const auto& kg = data.kg;

  for (int n = 0; n < spec.dialogues; ++n) {
    const auto c = rng.uniform_index(clusters);
    const auto target = pick(items[c], rng);
    const auto& words = vocab[c];
    const auto mention = [&]() {
      const auto& feats = features[static_cast<std::size_t>(target)];
      if (!feats.empty() && rng.bernoulli(0.7)) return pick(feats, rng);
      return pick(plain[c], rng);
    };
    Dialogue d;
    d.id = "syn-" + std::to_string(n);
    for (int t = 0; t + 1 < spec.utterances_per_dialogue; ++t) {
      Utterance u;
      const auto& w1 = pick(words, rng);
      const auto& w2 = pick(words, rng);
      if (t % 2 == 0) {
        u.speaker = Speaker::user;
        const auto form = rng.uniform_index(4);
        if (form == 0) {
          u.text = "i am in the mood for something " + w1 + " and " + w2;
        } else {
          const auto e = mention();
          const auto& name = kg.entity(e).name;
          if (form == 1) u.text = "i really liked " + name + " because it was so " + w1;
          if (form == 2) u.text = "do you know " + name + "? i want more " + w1 + " stuff";
          if (form == 3) u.text = "anything " + w1 + " with " + name + " would be great";
          u.entities.push_back(e);
        }
      } else {
        u.speaker = Speaker::recommender;
        if (rng.bernoulli(0.5)) {
          u.text = "what kind of " + w1 + " things do you enjoy?";
        } else {
          const auto e = mention();
          u.text = "have you heard of " + kg.entity(e).name + "? it is quite " + w1;
          u.entities.push_back(e);
        }
      }
      d.utterances.push_back(std::move(u));
    }
    Utterance last;
    last.speaker = Speaker::recommender;
    last.text = "you should watch " + kg.entity(target).name + ", it is " + pick(words, rng);
    last.entities.push_back(target);
    d.utterances.push_back(std::move(last));
    data.dialogues.push_back(std::move(d));
  }
  return data;
}

}  // namespace dacrs
