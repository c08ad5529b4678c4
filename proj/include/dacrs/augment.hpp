#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "dacrs/corpus.hpp"
#include "dacrs/rng.hpp"

namespace dacrs {

enum class RewriteMode { none, rephrase, summarize };
enum class WordAugment { remove, swap, crop };
enum class UtteranceAugment { remove, swap };
enum class Stage2Choice { none, word_delete, word_swap, word_crop, utt_delete, utt_swap };

const char* to_string(RewriteMode m) noexcept;
const char* to_string(Stage2Choice c) noexcept;

/// Text-to-text completion service used for stage-1 rewriting.
/// Implementations throw ProviderError on failure and never return empty text.
class RewriteProvider {
 public:
  virtual ~RewriteProvider() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Replays completions recorded as `<dir>/<prompt-hash>.txt`.
class FixtureReplayProvider : public RewriteProvider {
 public:
  explicit FixtureReplayProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string complete(const std::string& prompt) override;

 private:
  std::filesystem::path dir_;
};

/// Forwards to another provider and records each completion into a fixture
/// directory so later runs can replay it offline.
class RecordingProvider : public RewriteProvider {
 public:
  RecordingProvider(RewriteProvider& inner, std::filesystem::path dir)
      : inner_(inner), dir_(std::move(dir)) {}
  std::string complete(const std::string& prompt) override;

 private:
  RewriteProvider& inner_;
  std::filesystem::path dir_;
  std::mutex write_mutex_;
};

/// Hex FNV-1a of the prompt; names fixture files.
std::string prompt_hash(std::string_view prompt);

/// `User: <text>` / `Recommender: <text>` lines joined by '\n'.
std::string serialize_dialogue(const std::vector<Utterance>& utterances);
/// Inverse of serialize_dialogue. Lines without a speaker prefix continue
/// the previous utterance.
std::vector<Utterance> parse_serialized_dialogue(std::string_view text);

std::string build_rewrite_prompt(RewriteMode mode, std::string_view serialized_dialogue);

/// Stage 1. Mode none returns the serialized input unchanged.
std::string stage1_rewrite(const std::vector<Utterance>& dialogue, RewriteMode mode,
                           RewriteProvider* provider);

std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);

/// Stage 2, word level. delete/crop always keep at least one token.
std::vector<std::string> word_augment(std::vector<std::string> tokens, WordAugment mode,
                                      double rate, Rng& rng);

/// Stage 2, utterance level. Delete keeps at least one utterance.
std::vector<Utterance> utterance_augment(std::vector<Utterance> utterances, UtteranceAugment mode,
                                         double rate, Rng& rng);

struct AugmentConfig {
  double rate = 0.2;
  bool stage1_enabled = false;
  std::uint64_t seed = 0;
};

struct AugmentedDialogue {
  bool flat = false;  // true iff stage 1 summarized
  std::vector<Utterance> utterances;
  std::string summary;
  RewriteMode stage1 = RewriteMode::none;
  Stage2Choice stage2 = Stage2Choice::none;
  bool provider_failed = false;

  /// Text handed to the dialogue encoder.
  std::string text() const { return flat ? summary : serialize_dialogue(utterances); }
};

/// Draws one stage-1 technique (including none) and one stage-2 technique
/// with equal probability, then applies them in order. Provider failures
/// fall back to stage-1 none and set provider_failed.
AugmentedDialogue run_pipeline(const std::vector<Utterance>& dialogue, const AugmentConfig& config,
                               RewriteProvider* provider, Rng& rng);

}  // namespace dacrs
