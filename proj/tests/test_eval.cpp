#include <doctest.h>

#include <atomic>
#include <fstream>
#include <sstream>

#include "dacrs/eval.hpp"
#include "oracles.hpp"

using namespace dacrs;

namespace {

RecommendationList ranking(const std::vector<EntityId>& ids) {
  RecommendationList r;
  double s = static_cast<double>(ids.size());
  for (const auto id : ids) r.ranked.push_back({id, s--});
  return r;
}

class CountingEncoder : public DialogueEncoder {
 public:
  explicit CountingEncoder(std::size_t d, long healthy = -1) : inner_(d), healthy_(healthy) {}
  DialogueEmbedding encode(std::string_view text) const override {
    auto e = inner_.encode(text);
    if (healthy_ >= 0 && calls++ >= healthy_) e.vector.setConstant(std::nan(""));
    if (healthy_ < 0) ++calls;
    return e;
  }
  std::size_t dimension() const override { return inner_.dimension(); }
  std::string id() const override { return inner_.id(); }

  mutable std::atomic<long> calls{0};

 private:
  HashedNgramEncoder inner_;
  long healthy_;
};

struct Fixture {
  SyntheticData data = generate_synthetic({2, 6, 3, 60, 4, 11});
  KgIndex index{data.kg};
  std::vector<Dialogue> train_d, test_d;
  std::vector<TrainingSample> train;
  std::vector<TestSample> test;
  RunConfig config;

  Fixture() {
    std::tie(train_d, test_d) = split_dialogues(data.dialogues, 0.25);
    train = build_training_samples(train_d);
    test = build_test_samples(test_d, data.kg);
    config.model.d = 6;
    config.model.d_llm = 12;
    config.train.epochs = 2;
    config.train.batch_size = 16;
    config.train.learning_rate = 0.01;
  }
};

}  // namespace

TEST_CASE("recall examples") {
  CHECK(recall_at_k(ranking({4, 7}), {4}, 1) == 1.0);
  CHECK(recall_at_k(ranking({7, 4}), {4}, 1) == 0.0);
  CHECK(recall_at_k(ranking({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}), {1, 11}, 10) == 0.5);
  CHECK(recall_at_k(ranking({1, 2}), {1, 1}, 1) == 1.0);
  CHECK_THROWS_AS(recall_at_k(ranking({1}), {}, 1), ArgumentError);
  CHECK_THROWS_AS(recall_at_k(ranking({1}), {1}, 0), ArgumentError);
}

TEST_CASE("recall matches set intersection and is monotone in k") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::vector<EntityId> ids(5 + rng.uniform_index(40));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<EntityId>(i);
    rng.shuffle(ids.begin(), ids.end());
    std::vector<EntityId> targets;
    for (std::size_t t = 0, n = 1 + rng.uniform_index(4); t < n; ++t)
      targets.push_back(static_cast<EntityId>(rng.uniform_index(ids.size() + 5)));
    double prev = 0.0;
    for (std::size_t k = 1; k <= ids.size() + 2; ++k) {
      const double r = recall_at_k(ranking(ids), targets, k);
      CHECK(r == oracle::recall(ids, targets, k));
      CHECK(r >= prev);
      prev = r;
    }
  }
}

TEST_CASE("evaluate") {
  Fixture f;
  REQUIRE_FALSE(f.test.empty());
  const HashedNgramEncoder enc(12);
  SUBCASE("zero parameters return every item at k = |items|") {
    Rng rng(0);
    auto p = init_params(f.config.model, f.data.kg.num_entities(), f.data.kg.num_relations(), rng);
    p.set_zero();
    const Recommender rec(Checkpoint::from_params(p, f.config.model, f.config.train, 0, 0), f.data.kg, f.index, enc);
    const auto items = f.data.kg.num_items();
    const auto report = evaluate(rec, f.test, {1, items});
    CHECK(report.recall_at.at(items) == 1.0);
    CHECK(report.num_test_samples == f.test.size());
  }
  SUBCASE("corpus recall is the mean of per-sample recalls and is reproducible") {
    const auto trained = train(f.train, f.data.kg, f.index, f.config.model, f.config.train, {&enc, nullptr, nullptr});
    const Recommender rec(trained.checkpoint, f.data.kg, f.index, enc);
    const auto a = evaluate(rec, f.test, {10, 1, 5, 5});
    const auto b = evaluate(rec, f.test, {1, 5, 10});
    CHECK(a.ks == std::vector<std::size_t>{1, 5, 10});
    CHECK(a.recall_at == b.recall_at);
    for (std::size_t j = 0; j < a.ks.size(); ++j) {
      double sum = 0.0;
      for (const auto& s : a.per_sample) sum += s[j];
      CHECK(a.recall_at.at(a.ks[j]) == doctest::Approx(sum / static_cast<double>(a.per_sample.size())).epsilon(1e-15));
    }
    CHECK(a.recall_at.at(1) <= a.recall_at.at(5));
    CHECK(a.recall_at.at(5) <= a.recall_at.at(10));
    // Brute force: recompute each sample directly from the recommender.
    for (std::size_t i = 0; i < f.test.size(); ++i) {
      const auto list = rec.recommend(f.test[i].context, f.test[i].context_entities, 10, false);
      std::vector<EntityId> ids;
      for (const auto& s : list.ranked) ids.push_back(s.item);
      CHECK(a.per_sample[i][2] == oracle::recall(ids, f.test[i].target_items, 10));
    }
  }
}

TEST_CASE("popularity baseline ranks by training frequency") {
  const Kg kg({{"a", "a", true}, {"b", "b", true}, {"c", "c", true}, {"x", "x", false}}, {}, {});
  std::vector<TrainingSample> train(3);
  train[0].targets = {1, 3};
  train[1].targets = {1};
  train[2].targets = {2};
  TestSample t1, t2;
  t1.target_items = {1};
  t2.target_items = {0};
  const auto r = popularity_baseline(train, {t1, t2}, kg, {1, 2, 3});
  CHECK(r.recall_at.at(1) == 0.5);
  CHECK(r.recall_at.at(2) == 0.5);
  CHECK(r.recall_at.at(3) == 1.0);
}

TEST_CASE("metrics file and report") {
  EvalReport r;
  r.ks = {1, 10};
  r.recall_at = {{1, 0.25}, {10, 0.75}};
  r.num_test_samples = 4;
  std::ostringstream out;
  print_report(r, out);
  CHECK(out.str().find("recall@10   0.7500") != std::string::npos);
  const auto path = std::filesystem::temp_directory_path() / "dacrs_metrics.jsonl";
  write_metrics(r, path);
  std::ifstream in(path);
  std::string line;
  std::vector<nlohmann::json> records;
  while (std::getline(in, line)) records.push_back(nlohmann::json::parse(line));
  REQUIRE(records.size() == 2);
  CHECK(records[1]["metric"] == "recall@10");
  CHECK(records[1]["value"] == 0.75);
  std::filesystem::remove(path);
}

TEST_CASE("sweep") {
  Fixture f;
  const HashedNgramEncoder enc(12);
  const TrainContext ctx{&enc, nullptr, nullptr};
  SUBCASE("a one-point grid equals a direct evaluation") {
    SweepOptions opt{SweepParam::alpha, {0.5}, 1, {1, 10}, false};
    const auto result = sweep(opt, f.config, f.train, f.test, f.data.kg, f.index, ctx);
    REQUIRE(result.points.size() == 1);
    auto cfg = f.config;
    cfg.train.alpha = 0.5;
    const auto direct = train(f.train, f.data.kg, f.index, cfg.model, cfg.train, ctx);
    const Recommender rec(direct.checkpoint, f.data.kg, f.index, enc);
    CHECK(result.points[0].report.recall_at == evaluate(rec, f.test, {1, 10}).recall_at);
    CHECK(result.points[0].successful_runs == 1);
  }
  SUBCASE("failed runs are recorded and the sweep continues") {
    const CountingEncoder counter(12);
    sweep({SweepParam::alpha, {0.1}, 1, {1}, false}, f.config, f.train, f.test, f.data.kg, f.index,
          {&counter, nullptr, nullptr});
    // Healthy for exactly one grid point, then NaN everywhere.
    const CountingEncoder failing(12, counter.calls.load());
    SweepOptions opt{SweepParam::alpha, {0.1, 0.2}, 1, {1}, false};
    const auto result = sweep(opt, f.config, f.train, f.test, f.data.kg, f.index, {&failing, nullptr, nullptr});
    REQUIRE(result.points.size() == 2);
    CHECK(result.points[0].successful_runs == 1);
    CHECK(result.points[1].successful_runs == 0);
    CHECK_FALSE(result.points[1].errors.empty());
    SweepOptions bad{SweepParam::substitution_rate, {0.1, 3.0}, 1, {1}, false};
    CHECK_THROWS_AS(sweep(bad, f.config, f.train, f.test, f.data.kg, f.index, ctx), ArgumentError);
  }
  SUBCASE("parallel and sequential sweeps agree") {
    SweepOptions opt{SweepParam::augmentation_rate, {0.0, 0.3}, 2, {1, 10}, false};
    const auto seq = sweep(opt, f.config, f.train, f.test, f.data.kg, f.index, ctx);
    opt.parallel = true;
    const auto par = sweep(opt, f.config, f.train, f.test, f.data.kg, f.index, ctx);
    for (std::size_t i = 0; i < 2; ++i) CHECK(seq.points[i].report.recall_at == par.points[i].report.recall_at);
    const auto path = std::filesystem::temp_directory_path() / "dacrs_sweep.tsv";
    write_sweep_table(seq, path);
    std::ifstream in(path);
    std::string header, row1, row2, extra;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    CHECK(header.find("augmentation_rate") == 0);
    CHECK_FALSE(row2.empty());
    CHECK_FALSE(std::getline(in, extra));
    std::filesystem::remove(path);
  }
  SUBCASE("parameter names") {
    CHECK(parse_sweep_param("substitution_rate") == SweepParam::substitution_rate);
    CHECK_THROWS_AS(parse_sweep_param("beta"), ArgumentError);
  }
}

TEST_CASE("embedding dump") {
  const Kg kg({{"a", "Alpha, the \"first\"", true}, {"b", "b", false}, {"c", "c", true}}, {"r"}, {{0, 0, 1}});
  const KgIndex index(kg);
  ModelConfig mc;
  mc.d = 3;
  mc.d_llm = 2;
  Rng rng(1);
  const auto cp = Checkpoint::from_params(init_params(mc, 3, 1, rng), mc, TrainConfig{}, 0, 0);
  std::ostringstream out;
  CHECK(dump_embeddings(cp, kg, index, out) == 3);
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "id,name,is_item,x0,x1,x2");
  CHECK(lines[1].rfind("0,\"Alpha, the \"\"first\"\"\",1,", 0) == 0);
  const auto h = rgcn_forward(cp.params, index, mc);
  // Parse the coordinates of the last row back.
  std::vector<double> coords;
  std::stringstream row(lines[3]);
  std::string field;
  for (int i = 0; std::getline(row, field, ','); ++i)
    if (i >= 3) coords.push_back(std::stod(field));
  REQUIRE(coords.size() == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::isfinite(coords[c]));
    CHECK(coords[c] == doctest::Approx(h(2, c)).epsilon(1e-8));
  }
}
