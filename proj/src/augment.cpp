#include "dacrs/augment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dacrs/errors.hpp"

namespace dacrs {

namespace {

constexpr std::string_view kRephrasePrompt =
    "You are given a dialogue between a user and a recommender system. Here is the dialogue: "
    "{dialogue}. Rephrase the dialogue using as different words and styles as possible. Output "
    "ONLY the rephrased content.";
constexpr std::string_view kSummarizePrompt =
    "You are given a dialogue between a user and a recommender system. Here is the dialogue: "
    "{dialogue}. Summarize the user's preference for movie recommendations in a compact and "
    "informative manner.";

std::size_t count_for(double rate, std::size_t n) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ArgumentError("augmentation rate must be in [0,1]");
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

}  // namespace

const char* to_string(RewriteMode m) noexcept {
  switch (m) {
    case RewriteMode::rephrase: return "rephrase";
    case RewriteMode::summarize: return "summarize";
    default: return "none";
  }
}

const char* to_string(Stage2Choice c) noexcept {
  switch (c) {
    case Stage2Choice::word_delete: return "word_delete";
    case Stage2Choice::word_swap: return "word_swap";
    case Stage2Choice::word_crop: return "word_crop";
    case Stage2Choice::utt_delete: return "utt_delete";
    case Stage2Choice::utt_swap: return "utt_swap";
    default: return "none";
  }
}

std::string prompt_hash(std::string_view prompt) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(prompt)));
  return buf;
}

std::string FixtureReplayProvider::complete(const std::string& prompt) {
  const auto hash = prompt_hash(prompt);
  std::ifstream in(dir_ / (hash + ".txt"), std::ios::binary);
  if (!in) throw ProviderError("no recorded completion for prompt " + hash, hash);
  std::ostringstream text;
  text << in.rdbuf();
  if (text.str().empty()) throw ProviderError("empty recorded completion for prompt " + hash, hash);
  return text.str();
}

std::string RecordingProvider::complete(const std::string& prompt) {
  auto text = inner_.complete(prompt);
  const std::lock_guard lock(write_mutex_);
  std::filesystem::create_directories(dir_);
  std::ofstream out(dir_ / (prompt_hash(prompt) + ".txt"), std::ios::binary);
  out << text;
  return text;
}

std::string serialize_dialogue(const std::vector<Utterance>& utterances) {
  std::string out;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (i > 0) out += '\n';
    out += utterances[i].speaker == Speaker::user ? "User: " : "Recommender: ";
    out += utterances[i].text;
  }
  return out;
}

std::vector<Utterance> parse_serialized_dialogue(std::string_view text) {
  std::vector<Utterance> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    if (starts_with_ci(line, "user:")) {
      out.push_back({Speaker::user, trim(std::string_view(line).substr(5)), {}});
    } else if (starts_with_ci(line, "recommender:")) {
      out.push_back({Speaker::recommender, trim(std::string_view(line).substr(12)), {}});
    } else if (!out.empty()) {
      out.back().text += (out.back().text.empty() ? "" : " ") + line;
    }
  }
  return out;
}

std::string build_rewrite_prompt(RewriteMode mode, std::string_view serialized_dialogue) {
  std::string prompt(mode == RewriteMode::summarize ? kSummarizePrompt : kRephrasePrompt);
  const auto slot = prompt.find("{dialogue}");
  prompt.replace(slot, std::string_view("{dialogue}").size(), serialized_dialogue);
  return prompt;
}

std::string stage1_rewrite(const std::vector<Utterance>& dialogue, RewriteMode mode,
                           RewriteProvider* provider) {
  auto serialized = serialize_dialogue(dialogue);
  if (mode == RewriteMode::none) return serialized;
  const auto prompt = build_rewrite_prompt(mode, serialized);
  if (provider == nullptr) throw ProviderError("no rewrite provider configured", prompt_hash(prompt));
  auto text = provider->complete(prompt);
  if (trim(text).empty()) throw ProviderError("provider returned empty text", prompt_hash(prompt));
  return text;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(std::move(w));
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

std::vector<std::string> word_augment(std::vector<std::string> tokens, WordAugment mode,
                                      double rate, Rng& rng) {
  const auto n = tokens.size();
  const auto count = count_for(rate, n);
  if (n == 0 || count == 0) return tokens;
  switch (mode) {
    case WordAugment::remove: {
      const auto removed = std::min(count, n - 1);
      // Partial Fisher-Yates over positions picks the removed set uniformly.
      std::vector<std::size_t> positions(n);
      for (std::size_t i = 0; i < n; ++i) positions[i] = i;
      std::vector<bool> drop(n, false);
      for (std::size_t i = 0; i < removed; ++i) {
        const auto j = i + rng.uniform_index(n - i);
        std::swap(positions[i], positions[j]);
        drop[positions[i]] = true;
      }
      std::vector<std::string> kept;
      kept.reserve(n - removed);
      for (std::size_t i = 0; i < n; ++i)
        if (!drop[i]) kept.push_back(std::move(tokens[i]));
      return kept;
    }
    case WordAugment::swap: {
      if (n < 2) return tokens;
      for (std::size_t k = 0; k < count; ++k) {
        const auto i = rng.uniform_index(n - 1);
        std::swap(tokens[i], tokens[i + 1]);
      }
      return tokens;
    }
    case WordAugment::crop: {
      const auto length = std::min(count, n - 1);
      if (length == 0) return tokens;
      const auto start = rng.uniform_index(n - length + 1);
      tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                   tokens.begin() + static_cast<std::ptrdiff_t>(start + length));
      return tokens;
    }
  }
  return tokens;
}

std::vector<Utterance> utterance_augment(std::vector<Utterance> utterances, UtteranceAugment mode,
                                         double rate, Rng& rng) {
  const auto n = utterances.size();
  if (n < 2) return utterances;
  if (mode == UtteranceAugment::swap) {
    const auto i = rng.uniform_index(n);
    auto j = rng.uniform_index(n - 1);
    if (j >= i) ++j;
    std::swap(utterances[i], utterances[j]);
    return utterances;
  }
  const auto removed = std::min(std::max<std::size_t>(1, count_for(rate, n)), n - 1);
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i;
  std::vector<bool> drop(n, false);
  for (std::size_t i = 0; i < removed; ++i) {
    const auto j = i + rng.uniform_index(n - i);
    std::swap(positions[i], positions[j]);
    drop[positions[i]] = true;
  }
  std::vector<Utterance> kept;
  for (std::size_t i = 0; i < n; ++i)
    if (!drop[i]) kept.push_back(std::move(utterances[i]));
  return kept;
}

AugmentedDialogue run_pipeline(const std::vector<Utterance>& dialogue, const AugmentConfig& config,
                               RewriteProvider* provider, Rng& rng) {
  if (!(config.rate >= 0.0 && config.rate <= 1.0)) {
    throw ArgumentError("augmentation rate must be in [0,1]");
  }
  AugmentedDialogue out;
  out.utterances = dialogue;

  constexpr RewriteMode kStage1[] = {RewriteMode::rephrase, RewriteMode::summarize,
                                     RewriteMode::none};
  const auto drawn = config.stage1_enabled ? kStage1[rng.uniform_index(3)] : RewriteMode::none;
  if (drawn != RewriteMode::none && !dialogue.empty()) {
    try {
      auto text = stage1_rewrite(dialogue, drawn, provider);
      if (drawn == RewriteMode::summarize) {
        out.flat = true;
        out.summary = trim(text);
        out.utterances.clear();
      } else {
        auto parsed = parse_serialized_dialogue(text);
        if (parsed.empty()) throw ProviderError("rephrased text has no speaker-prefixed lines");
        out.utterances = std::move(parsed);
      }
      out.stage1 = drawn;
    } catch (const ProviderError&) {
      out.provider_failed = true;
    }
  }

  constexpr Stage2Choice kStructured[] = {Stage2Choice::word_delete, Stage2Choice::word_swap,
                                          Stage2Choice::word_crop,   Stage2Choice::utt_delete,
                                          Stage2Choice::utt_swap,    Stage2Choice::none};
  constexpr Stage2Choice kFlat[] = {Stage2Choice::word_delete, Stage2Choice::word_swap,
                                    Stage2Choice::word_crop, Stage2Choice::none};
  out.stage2 = out.flat ? kFlat[rng.uniform_index(4)] : kStructured[rng.uniform_index(6)];

  const auto apply_words = [&](std::string& text, WordAugment mode) {
    auto words = split_words(text);
    if (!words.empty()) text = join_words(word_augment(std::move(words), mode, config.rate, rng));
  };
  const auto word_mode = [](Stage2Choice c) {
    return c == Stage2Choice::word_delete ? WordAugment::remove
           : c == Stage2Choice::word_swap ? WordAugment::swap
                                          : WordAugment::crop;
  };
  switch (out.stage2) {
    case Stage2Choice::word_delete:
    case Stage2Choice::word_swap:
    case Stage2Choice::word_crop:
      if (config.rate > 0.0) {
        if (out.flat) {
          apply_words(out.summary, word_mode(out.stage2));
        } else {
          for (auto& u : out.utterances) apply_words(u.text, word_mode(out.stage2));
        }
      }
      break;
    case Stage2Choice::utt_delete:
      // Delete removes at least one utterance, so a zero rate stays identity.
      if (config.rate > 0.0) {
        out.utterances = utterance_augment(std::move(out.utterances), UtteranceAugment::remove,
                                           config.rate, rng);
      }
      break;
    case Stage2Choice::utt_swap:
      if (config.rate > 0.0) {
        out.utterances = utterance_augment(std::move(out.utterances), UtteranceAugment::swap,
                                           config.rate, rng);
      }
      break;
    case Stage2Choice::none:
      break;
  }
  return out;
}

}  // namespace dacrs
