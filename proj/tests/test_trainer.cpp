#include <doctest.h>

#include "dacrs/trainer.hpp"
#include "oracles.hpp"

using namespace dacrs;

namespace {

struct SmallRun {
  SyntheticData data = generate_synthetic({2, 6, 2, 40, 4, 3});
  KgIndex index{data.kg};
  std::vector<TrainingSample> samples = build_training_samples(data.dialogues);
  ModelConfig model;
  TrainConfig train;
  HashedNgramEncoder encoder{16};

  SmallRun() {
    model.d = 8;
    model.d_llm = 16;
    model.seed = 2;
    train.epochs = 3;
    train.batch_size = 16;
    train.learning_rate = 0.01;
    train.seed = 4;
  }
  TrainResult run() const { return dacrs::train(samples, data.kg, index, model, train, {&encoder, nullptr, nullptr}); }
};

std::vector<double> totals(const TrainResult& r) {
  std::vector<double> out;
  for (const auto& e : r.epochs) out.push_back(e.total);
  return out;
}

}  // namespace

TEST_CASE("rec loss examples") {
  SUBCASE("identical rows, one target, |E| = 8") {
    const Matrix<double> e = Matrix<double>::Constant(8, 3, 0.4);
    const Matrix<double> u = Matrix<double>::Constant(1, 3, 1.3);
    CHECK(rec_loss<double>(u, {{5}}, e) == doctest::Approx(std::log(8.0)));
  }
  SUBCASE("orthogonal user") {
    Matrix<double> e(4, 2);
    e << 1, 0, 2, 0, -1, 0, 0.5, 0;
    Matrix<double> u(1, 2);
    u << 0, 1;
    CHECK(rec_loss<double>(u, {{0, 2, 3}}, e) == doctest::Approx(3.0 * std::log(4.0)));
  }
  SUBCASE("4 entities, 2 targets, seed 19") {
    Rng rng(19);
    Matrix<double> e(4, 3), u(1, 3);
    for (int i = 0; i < e.size(); ++i) e.data()[i] = rng.uniform(-1, 1);
    for (int i = 0; i < 3; ++i) u(0, i) = rng.uniform(-1, 1);
    const double v = rec_loss<double>(u, {{1, 3}}, e);
    CHECK(std::abs(v - oracle::rec_loss(u, {{1, 3}}, e)) < 1e-12);
    CHECK(v == doctest::Approx(4.2640621654).epsilon(1e-9));
  }
  SUBCASE("errors") {
    const Matrix<double> e = Matrix<double>::Zero(3, 2);
    const Matrix<double> u = Matrix<double>::Zero(1, 2);
    CHECK_THROWS_AS(rec_loss<double>(u, {{}}, e), ArgumentError);
    Matrix<double> bad = u;
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(rec_loss<double>(bad, {{0}}, e), NumericError);
  }
}

TEST_CASE("total gradient matches finite differences on micro-models") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto mi = oracle::random_micro(seed);
    const auto analytic = total_loss_and_grad<double>(mi.batch, mi.params, mi.index, mi.config, mi.alpha);
    const auto f = [&](const ModelParams<double>& p) {
      return oracle::total_loss(mi.batch, p, mi.kg, mi.config, mi.alpha);
    };
    CHECK(analytic.total == doctest::Approx(f(mi.params)).epsilon(1e-12));
    const auto fd = oracle::finite_difference(mi.params, f);
    for (const auto& [name, err] : oracle::relative_errors(analytic.grad, fd)) {
      INFO("seed " << seed << " tensor " << name);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("loss additivity and alpha = 0") {
  auto mi = oracle::random_micro(21);
  const auto with = total_loss_and_grad<double>(mi.batch, mi.params, mi.index, mi.config, 0.7);
  CHECK(with.total == with.rec_loss + 0.7 * with.entity_loss);
  const auto zero = total_loss_and_grad<double>(mi.batch, mi.params, mi.index, mi.config, 0.0);
  // Rec-only gradient through the same composition by finite differences.
  const auto fd = oracle::finite_difference(mi.params, [&](const ModelParams<double>& p) {
    return oracle::total_loss(mi.batch, p, mi.kg, mi.config, 0.0);
  });
  for (const auto& [name, err] : oracle::relative_errors(zero.grad, fd)) CHECK(err < 1e-4);
  CHECK(zero.total == zero.rec_loss);
}

TEST_CASE("fusion gradient vanishes without entities") {
  auto mi = oracle::random_micro(5);
  for (auto& s : mi.batch) s.context_entities.clear();
  const auto r = total_loss_and_grad<double>(mi.batch, mi.params, mi.index, mi.config, mi.alpha);
  CHECK(r.grad.fusion_raw == 0.0);
  CHECK(r.grad.query.isZero());
  CHECK(r.grad.key.isZero());
  CHECK(r.grad.value.isZero());
}

TEST_CASE("AdamW first step") {
  ModelConfig c;
  c.d = 1;
  c.d_llm = 1;
  Rng rng(0);
  auto p = init_params(c, 1, 0, rng);
  p.visit([](const std::string&, auto m) { m.setConstant(2.0); });
  auto g = p.zeros_like();
  g.visit([](const std::string&, auto m) { m.setConstant(0.5); });
  AdamW opt(0.1, 0.01);
  opt.step(p, g);
  // m_hat = g, v_hat = g^2, so the adaptive term is g / (|g| + eps).
  const double expected = 2.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 2.0);
  p.visit([&](const std::string&, auto m) { CHECK(m[0] == doctest::Approx(expected).epsilon(1e-15)); });
  CHECK(opt.steps() == 1);
  AdamW frozen(0.0, 0.01);
  auto q = p;
  frozen.step(q, g);
  std::vector<double> a, b;
  p.visit([&](const std::string&, auto m) { a.push_back(m[0]); });
  q.visit([&](const std::string&, auto m) { b.push_back(m[0]); });
  CHECK(a == b);
}

TEST_CASE("training with learning rate 0 leaves parameters at their initial values") {
  SmallRun run;
  run.train.learning_rate = 0.0;
  run.train.epochs = 1;
  const auto r = run.run();
  Rng init(derive_seed(run.model.seed, 0x696e6974));
  const auto p0 = init_params(run.model, run.data.kg.num_entities(), run.data.kg.num_relations(), init);
  std::vector<Vector<double>> a, b;
  p0.visit([&](const std::string&, auto m) { a.emplace_back(m); });
  r.params.visit([&](const std::string&, auto m) { b.emplace_back(m); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("training is deterministic and reports consistent losses") {
  SmallRun run;
  const auto a = run.run();
  const auto b = run.run();
  CHECK(totals(a) == totals(b));
  CHECK(a.checkpoint.params.base == b.checkpoint.params.base);
  CHECK(a.checkpoint.rng_digest == b.checkpoint.rng_digest);
  REQUIRE(a.epochs.size() == 3);
  for (const auto& e : a.epochs) {
    CHECK(e.total == e.rec_loss + run.train.alpha * e.entity_loss);
    CHECK(e.batches.size() == (run.samples.size() + 15) / 16);
    CHECK(e.provider_failures == 0);
  }
  run.train.seed = 5;
  CHECK(totals(run.run()) != totals(a));
}

TEST_CASE("the frozen encoder is untouched by training") {
  SmallRun run;
  const auto before = run.encoder.encode("User: some fixed text").vector;
  run.run();
  CHECK(run.encoder.encode("User: some fixed text").vector == before);
}

TEST_CASE("training options") {
  SmallRun run;
  SUBCASE("sampled negatives") {
    run.train.entity_negatives = 4;
    const auto r = run.run();
    CHECK(std::isfinite(r.epochs.back().total));
  }
  SUBCASE("holdout split reports a holdout loss") {
    run.train.holdout_fraction = 0.25;
    const auto r = run.run();
    CHECK(r.epochs.back().holdout_rec_loss > 0.0);
  }
  SUBCASE("configuration errors") {
    HashedNgramEncoder wrong(8);
    CHECK_THROWS_AS(dacrs::train(run.samples, run.data.kg, run.index, run.model, run.train, {&wrong, nullptr, nullptr}),
                    ConfigError);
    run.train.stage1 = "fixtures";
    CHECK_THROWS_AS(run.run(), ConfigError);
    CHECK_THROWS_AS(dacrs::train({}, run.data.kg, run.index, run.model, TrainConfig{}, {&run.encoder, nullptr, nullptr}),
                    ArgumentError);
  }
  SUBCASE("divergence names the batch") {
    run.train.learning_rate = 1e300;
    CHECK_THROWS_WITH_AS(run.run(), doctest::Contains("batch"), NumericError);
  }
}

TEST_CASE("run config parsing") {
  const auto cfg = parse_run_config(nlohmann::json{{"alpha", 0.5}, {"d", 16}, {"epochs", 3}, {"model_seed", 9}});
  CHECK(cfg.train.alpha == 0.5);
  CHECK(cfg.model.d == 16);
  CHECK(cfg.model.seed == 9);
  CHECK(cfg.train.learning_rate == 1e-3);
  CHECK(cfg.train.weight_decay == 0.01);
  CHECK(cfg.train.batch_size == 128);
  CHECK(cfg.train.epochs == 3);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"alhpa", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"alpha", -1}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"d", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"substitution_rate", 1.5}}), ConfigError);
}
