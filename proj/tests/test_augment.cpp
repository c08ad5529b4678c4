#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "dacrs/augment.hpp"
#include "dacrs/errors.hpp"

using namespace dacrs;

namespace {

std::vector<std::string> tokens(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("w" + std::to_string(i));
  return out;
}

bool is_subsequence(const std::vector<std::string>& sub, const std::vector<std::string>& of) {
  auto it = of.begin();
  for (const auto& s : sub) {
    it = std::find(it, of.end(), s);
    if (it == of.end()) return false;
    ++it;
  }
  return true;
}

std::vector<Utterance> utterances(std::size_t n) {
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({i % 2 ? Speaker::recommender : Speaker::user, "utterance number " + std::to_string(i), {}});
  }
  return out;
}

class ScriptedProvider : public RewriteProvider {
 public:
  std::string complete(const std::string& prompt) override {
    ++calls;
    if (prompt.find("Summarize") != std::string::npos) return "the user prefers sci-fi movies with giant robots";
    return "User: something different\nRecommender: a new suggestion";
  }
  int calls = 0;
};

class FailingProvider : public RewriteProvider {
 public:
  std::string complete(const std::string& prompt) override {
    throw ProviderError("offline", prompt_hash(prompt));
  }
};

}  // namespace

TEST_CASE("serialization") {
  const std::vector<Utterance> d{{Speaker::user, "I like robots", {}}, {Speaker::recommender, "Try Pacific Rim", {}}};
  const auto text = serialize_dialogue(d);
  CHECK(text == "User: I like robots\nRecommender: Try Pacific Rim");
  const auto back = parse_serialized_dialogue(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].speaker == Speaker::recommender);
  CHECK(back[1].text == "Try Pacific Rim");
  CHECK(parse_serialized_dialogue("user: a\ncontinued\n\nRECOMMENDER: b").at(0).text == "a continued");
}

TEST_CASE("prompts embed the serialized dialogue") {
  const auto p = build_rewrite_prompt(RewriteMode::rephrase, "User: hi");
  CHECK(p.find("Here is the dialogue: User: hi. Rephrase") != std::string::npos);
  CHECK(p.find("Output ONLY the rephrased content.") != std::string::npos);
  const auto s = build_rewrite_prompt(RewriteMode::summarize, "User: hi");
  CHECK(s.find("in a compact and informative manner") != std::string::npos);
  CHECK(prompt_hash(p).size() == 16);
  CHECK(prompt_hash(p) != prompt_hash(s));
}

TEST_CASE("stage 1") {
  const auto d = utterances(3);
  SUBCASE("none is identity") { CHECK(stage1_rewrite(d, RewriteMode::none, nullptr) == serialize_dialogue(d)); }
  SUBCASE("fixture replay returns recorded bytes") {
    const auto dir = std::filesystem::temp_directory_path() / "dacrs_fixtures";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto prompt = build_rewrite_prompt(RewriteMode::summarize, serialize_dialogue(d));
    const std::string recorded = "the user prefers sci-fi movies with giant robots\n\xc3\xa9";
    std::ofstream(dir / (prompt_hash(prompt) + ".txt"), std::ios::binary) << recorded;
    FixtureReplayProvider replay(dir);
    CHECK(stage1_rewrite(d, RewriteMode::summarize, &replay) == recorded);
    try {
      stage1_rewrite(d, RewriteMode::rephrase, &replay);
      FAIL("expected a provider error");
    } catch (const ProviderError& e) {
      CHECK(e.prompt_hash() == prompt_hash(build_rewrite_prompt(RewriteMode::rephrase, serialize_dialogue(d))));
    }
    std::filesystem::remove_all(dir);
  }
  SUBCASE("recording provider writes replayable fixtures") {
    const auto dir = std::filesystem::temp_directory_path() / "dacrs_recorded";
    std::filesystem::remove_all(dir);
    ScriptedProvider live;
    RecordingProvider recorder(live, dir);
    const auto first = stage1_rewrite(d, RewriteMode::rephrase, &recorder);
    FixtureReplayProvider replay(dir);
    CHECK(stage1_rewrite(d, RewriteMode::rephrase, &replay) == first);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("word augment examples") {
  Rng rng(1);
  for (const auto mode : {WordAugment::remove, WordAugment::swap, WordAugment::crop}) {
    CHECK(word_augment(tokens(7), mode, 0.0, rng) == tokens(7));
  }
  CHECK(word_augment(tokens(5), WordAugment::remove, 1.0, rng).size() == 1);
  CHECK(word_augment(tokens(5), WordAugment::crop, 1.0, rng).size() == 1);
  CHECK_THROWS_AS(word_augment(tokens(5), WordAugment::remove, 1.5, rng), ArgumentError);
}

TEST_CASE("word delete, rate 0.4, seed 3") {
  Rng rng(3);
  const auto out = word_augment(tokens(10), WordAugment::remove, 0.4, rng);
  // Replay: partial Fisher-Yates picks the four removed positions.
  Rng replay(3);
  std::vector<std::size_t> pos(10);
  for (std::size_t i = 0; i < 10; ++i) pos[i] = i;
  std::vector<bool> drop(10, false);
  for (std::size_t i = 0; i < 4; ++i) {
    std::swap(pos[i], pos[i + replay.uniform_index(10 - i)]);
    drop[pos[i]] = true;
  }
  std::vector<std::string> expected;
  for (std::size_t i = 0; i < 10; ++i)
    if (!drop[i]) expected.push_back("w" + std::to_string(i));
  CHECK(out == expected);
  CHECK(out == std::vector<std::string>{"w0", "w1", "w3", "w4", "w6", "w9"});
}

TEST_CASE("utterance augment examples") {
  Rng rng(0);
  CHECK(utterance_augment(utterances(1), UtteranceAugment::remove, 0.9, rng).size() == 1);
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng r(s);
    const auto out = utterance_augment(utterances(2), UtteranceAugment::swap, 0.2, r);
    CHECK(out[0] == utterances(2)[1]);
    CHECK(out[1] == utterances(2)[0]);
  }
}

TEST_CASE("utterance delete, 5 utterances, rate 0.4, seed 9") {
  Rng rng(9);
  const auto out = utterance_augment(utterances(5), UtteranceAugment::remove, 0.4, rng);
  REQUIRE(out.size() == 3);
  Rng replay(9);
  std::vector<std::size_t> pos{0, 1, 2, 3, 4};
  std::vector<bool> drop(5, false);
  for (std::size_t i = 0; i < 2; ++i) {
    std::swap(pos[i], pos[i + replay.uniform_index(5 - i)]);
    drop[pos[i]] = true;
  }
  std::vector<Utterance> expected;
  for (std::size_t i = 0; i < 5; ++i)
    if (!drop[i]) expected.push_back(utterances(5)[i]);
  CHECK(out == expected);
  std::vector<std::string> kept;
  for (const auto& u : out) kept.push_back(u.text);
  CHECK(kept == std::vector<std::string>{"utterance number 1", "utterance number 2", "utterance number 4"});
}

TEST_CASE("augmenter invariants over seeded cases") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed);
    const auto n = 1 + rng.uniform_index(30);
    const double rate = rng.uniform01();
    const auto f = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
    const auto in = tokens(n);
    const auto del = word_augment(in, WordAugment::remove, rate, rng);
    CHECK(del.size() == std::max<std::size_t>(1, n - f));
    CHECK(is_subsequence(del, in));
    const auto crop = word_augment(in, WordAugment::crop, rate, rng);
    CHECK(crop.size() == (n - f == 0 ? 1 : n - f));
    auto swapped = word_augment(in, WordAugment::swap, rate, rng);
    std::sort(swapped.begin(), swapped.end());
    auto sorted = in;
    std::sort(sorted.begin(), sorted.end());
    CHECK(swapped == sorted);
  }
}

TEST_CASE("pipeline identity paths") {
  const auto d = utterances(4);
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(s);
    const auto out = run_pipeline(d, {0.0, false, s}, nullptr, rng);
    CHECK(out.text() == serialize_dialogue(d));
    CHECK(out.stage1 == RewriteMode::none);
  }
}

TEST_CASE("pipeline with a provider") {
  const auto d = utterances(4);
  ScriptedProvider provider;
  int summaries = 0;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    Rng rng(s);
    const auto out = run_pipeline(d, {0.3, true, s}, &provider, rng);
    CHECK(out.flat == (out.stage1 == RewriteMode::summarize));
    if (out.stage1 == RewriteMode::summarize) {
      ++summaries;
      CHECK(out.stage2 != Stage2Choice::utt_delete);
      CHECK(out.stage2 != Stage2Choice::utt_swap);
      CHECK_FALSE(out.summary.empty());
    }
    if (out.stage1 == RewriteMode::rephrase && out.stage2 == Stage2Choice::none) {
      CHECK(out.text() == "User: something different\nRecommender: a new suggestion");
    }
  }
  CHECK(summaries > 500);
}

TEST_CASE("provider failures fall back to none") {
  const auto d = utterances(3);
  FailingProvider provider;
  int failures = 0;
  for (std::uint64_t s = 0; s < 60; ++s) {
    Rng rng(s);
    const auto out = run_pipeline(d, {0.0, true, s}, &provider, rng);
    CHECK(out.stage1 == RewriteMode::none);
    CHECK_FALSE(out.flat);
    CHECK(out.text() == serialize_dialogue(d));
    failures += out.provider_failed ? 1 : 0;
  }
  CHECK(failures > 20);
}

TEST_CASE("pipeline replay determinism") {
  const auto d = utterances(6);
  ScriptedProvider provider;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng a(s), b(s);
    const auto x = run_pipeline(d, {0.4, true, s}, &provider, a);
    const auto y = run_pipeline(d, {0.4, true, s}, &provider, b);
    CHECK(x.text() == y.text());
    CHECK(x.stage1 == y.stage1);
    CHECK(x.stage2 == y.stage2);
  }
}
