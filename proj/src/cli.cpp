#include "dacrs/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dacrs/eval.hpp"
#include "dacrs/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

namespace dacrs {

namespace {

namespace fs = std::filesystem;

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::move(fallback);
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      const auto v = std::stol(part);
      if (v < 1) throw ArgumentError("k values must be positive");
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ArgumentError("bad k list '" + text + "'");
    }
  }
  if (ks.empty()) throw ArgumentError("empty k list");
  return ks;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      grid.push_back(std::stod(part));
    } catch (const std::logic_error&) {
      throw ArgumentError("bad grid '" + text + "'");
    }
  }
  return grid;
}

struct Providers {
  std::unique_ptr<RewriteProvider> live;
  std::unique_ptr<RewriteProvider> active;
};

Providers make_rewriter(const std::string& stage1, const std::string& fixtures_dir) {
  Providers p;
  if (stage1 == "fixtures") {
    p.active = std::make_unique<FixtureReplayProvider>(fixtures_dir);
  } else if (stage1 == "on") {
    p.live = std::make_unique<ChatCompletionProvider>(HttpEndpoint::from_env("DACRS_LLM"));
    p.active = std::make_unique<RecordingProvider>(*p.live, fixtures_dir);
  } else if (stage1 != "off") {
    throw ArgumentError("--stage1 must be on, off or fixtures");
  }
  return p;
}

struct Loaded {
  Kg kg;
  KgIndex index;
};

Loaded load_graph(const std::string& dir) {
  Loaded g{load_kg_dir(dir), {}};
  g.index = KgIndex(g.kg);
  return g;
}

std::vector<Dialogue> load_split(const std::string& data_dir, const char* name, const Kg& kg,
                                 std::ostream& err) {
  auto set = load_dialogues_file(fs::path(data_dir) / name, kg);
  if (set.dropped_annotations > 0) {
    err << "warning: " << name << ": dropped " << set.dropped_annotations
        << " entity annotations not present in the KG\n";
  }
  return std::move(set.dialogues);
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conversational recommendation engine: train, evaluate and serve", "dacrs"};
  app.require_subcommand(0, 1);

  // train
  std::string config_path, data_dir, kg_dir, out_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--config", config_path, "Flat JSON config file")->required();
  train_cmd->add_option("--data", data_dir, "Directory with train.jsonl")->required();
  train_cmd->add_option("--kg", kg_dir, "Directory with entities.tsv and triples.tsv")->required();
  train_cmd->add_option("--out", out_path, "Checkpoint output path")->required();

  // eval
  std::string ckpt_path, ks_text = "1,10,50", metrics_path;
  bool exclude_mentioned = false;
  auto* eval_cmd = app.add_subcommand("eval", "Recall@k on test.jsonl");
  eval_cmd->add_option("--ckpt", ckpt_path)->required();
  eval_cmd->add_option("--data", data_dir, "Directory with test.jsonl")->required();
  eval_cmd->add_option("--kg", kg_dir)->required();
  eval_cmd->add_option("--k", ks_text, "Comma-separated cutoffs")->capture_default_str();
  eval_cmd->add_option("--metrics", metrics_path, "Metrics file (default <ckpt>.metrics.jsonl)");
  eval_cmd->add_flag("--exclude-mentioned", exclude_mentioned, "Drop already-mentioned items");

  // sweep
  std::string param = "alpha", grid_text;
  int runs = 5;
  bool parallel = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a parameter grid");
  sweep_cmd->add_option("--param", param, "alpha | substitution_rate | augmentation_rate")->capture_default_str();
  sweep_cmd->add_option("--grid", grid_text, "Comma-separated values")->required();
  sweep_cmd->add_option("--config", config_path)->required();
  sweep_cmd->add_option("--data", data_dir, "Directory with train.jsonl and test.jsonl")->required();
  sweep_cmd->add_option("--kg", kg_dir)->required();
  sweep_cmd->add_option("--runs", runs, "Runs averaged per point")->capture_default_str();
  sweep_cmd->add_option("--k", ks_text)->capture_default_str();
  sweep_cmd->add_option("--out", out_path, "Tab-separated results table");
  sweep_cmd->add_flag("--parallel", parallel, "Run grid points concurrently");

  // augment
  std::string input_path, stage1 = "off", fixtures_dir = "fixtures";
  double rate = 0.2;
  std::uint64_t seed = 0;
  auto* augment_cmd = app.add_subcommand("augment", "Emit an augmented copy of a dialogue file");
  augment_cmd->add_option("--input", input_path)->required();
  augment_cmd->add_option("--rate", rate)->capture_default_str();
  augment_cmd->add_option("--seed", seed)->capture_default_str();
  augment_cmd->add_option("--stage1", stage1, "on | off | fixtures")->capture_default_str();
  augment_cmd->add_option("--fixtures", fixtures_dir, "Fixture directory")->capture_default_str();

  // dump-embeddings
  auto* dump_cmd = app.add_subcommand("dump-embeddings", "Write post-RGCN entity embeddings as CSV");
  dump_cmd->add_option("--ckpt", ckpt_path)->required();
  dump_cmd->add_option("--kg", kg_dir)->required();
  dump_cmd->add_option("--out", out_path)->required();

  // serve
  std::string bind = env_or("DACRS_BIND", "127.0.0.1:8080");
  std::string cors = env_or("DACRS_CORS_ORIGIN", "*");
  auto* serve_cmd = app.add_subcommand("serve", "HTTP recommendation service");
  serve_cmd->add_option("--ckpt", ckpt_path)->required();
  serve_cmd->add_option("--kg", kg_dir)->required();
  serve_cmd->add_option("--bind", bind, "host:port")->capture_default_str();
  serve_cmd->add_option("--cors-origin", cors)->capture_default_str();

  // recommend
  std::string dialogue_path;
  std::size_t k = 10;
  auto* rec_cmd = app.add_subcommand("recommend", "Top-k items for one dialogue record");
  rec_cmd->add_option("--ckpt", ckpt_path)->required();
  rec_cmd->add_option("--kg", kg_dir)->required();
  rec_cmd->add_option("--dialogue", dialogue_path, "JSON dialogue record")->required();
  rec_cmd->add_option("--k", k)->capture_default_str()->check(CLI::PositiveNumber);
  rec_cmd->add_flag("--exclude-mentioned", exclude_mentioned);

  // generate-synthetic
  SyntheticSpec spec;
  double test_fraction = 0.2;
  auto* synth_cmd = app.add_subcommand("generate-synthetic", "Write a planted-preference dataset");
  synth_cmd->add_option("--out", out_path, "Output directory (kg/ and data/)")->required();
  synth_cmd->add_option("--clusters", spec.num_clusters)->capture_default_str();
  synth_cmd->add_option("--entities", spec.entities_per_cluster, "Non-item entities per cluster")->capture_default_str();
  synth_cmd->add_option("--items", spec.items_per_cluster, "Items per cluster")->capture_default_str();
  synth_cmd->add_option("--dialogues", spec.dialogues)->capture_default_str();
  synth_cmd->add_option("--utterances", spec.utterances_per_dialogue)->capture_default_str();
  synth_cmd->add_option("--seed", spec.seed)->capture_default_str();
  synth_cmd->add_option("--test-fraction", test_fraction)->capture_default_str();

  if (argc <= 1) {
    err << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return 1;
  }

  try {
    if (train_cmd->parsed()) {
      const auto run = load_run_config(config_path);
      const auto graph = load_graph(kg_dir);
      const auto samples = build_training_samples(load_split(data_dir, "train.jsonl", graph.kg, err));
      const auto encoder = make_encoder(run.model.encoder, static_cast<std::size_t>(run.model.d_llm));
      auto providers = make_rewriter(run.train.stage1, run.train.fixtures_dir);
      TrainContext context{encoder.get(), providers.active.get(),
                           [&](int epoch, const LossReport& r) {
                             out << "epoch " << epoch << "  rec " << std::setprecision(8) << r.rec_loss
                                 << "  entity " << r.entity_loss << "  total " << r.total;
                             if (r.provider_failures > 0) out << "  provider_failures " << r.provider_failures;
                             if (run.train.holdout_fraction > 0.0) out << "  holdout_rec " << r.holdout_rec_loss;
                             out << '\n';
                           }};
      const auto result = train(samples, graph.kg, graph.index, run.model, run.train, context);
      save_checkpoint(result.checkpoint, out_path);
      out << "wrote " << out_path << '\n';
      return 0;
    }
    if (eval_cmd->parsed()) {
      const auto graph = load_graph(kg_dir);
      const auto cp = load_checkpoint(ckpt_path);
      const auto encoder = make_encoder(cp.model.encoder, static_cast<std::size_t>(cp.model.d_llm));
      const Recommender recommender(cp, graph.kg, graph.index, *encoder);
      const auto samples = build_test_samples(load_split(data_dir, "test.jsonl", graph.kg, err), graph.kg);
      const auto report = evaluate(recommender, samples, parse_ks(ks_text), exclude_mentioned);
      print_report(report, out);
      const auto path = metrics_path.empty() ? ckpt_path + ".metrics.jsonl" : metrics_path;
      write_metrics(report, path);
      out << "wrote " << path << '\n';
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const auto run = load_run_config(config_path);
      const auto graph = load_graph(kg_dir);
      const auto train_samples = build_training_samples(load_split(data_dir, "train.jsonl", graph.kg, err));
      const auto test_samples = build_test_samples(load_split(data_dir, "test.jsonl", graph.kg, err), graph.kg);
      const auto encoder = make_encoder(run.model.encoder, static_cast<std::size_t>(run.model.d_llm));
      auto providers = make_rewriter(run.train.stage1, run.train.fixtures_dir);
      SweepOptions options{parse_sweep_param(param), parse_grid(grid_text), runs, parse_ks(ks_text), parallel};
      const auto result = sweep(options, run, train_samples, test_samples, graph.kg, graph.index,
                                TrainContext{encoder.get(), providers.active.get(), nullptr});
      print_sweep(result, out);
      if (!out_path.empty()) {
        write_sweep_table(result, out_path);
        out << "wrote " << out_path << '\n';
      }
      return 0;
    }
    if (augment_cmd->parsed()) {
      const Kg empty;
      auto set = load_dialogues_file(input_path, empty);
      auto providers = make_rewriter(stage1, fixtures_dir);
      const AugmentConfig config{rate, stage1 != "off", seed};
      std::size_t failures = 0;
      for (std::size_t i = 0; i < set.dialogues.size(); ++i) {
        const auto& d = set.dialogues[i];
        Rng rng(derive_seed(seed, i));
        const auto aug = run_pipeline(d.utterances, config, providers.active.get(), rng);
        failures += aug.provider_failed ? 1 : 0;
        nlohmann::json record = {{"dialogue_id", d.id},
                                 {"stage1", to_string(aug.stage1)},
                                 {"stage2", to_string(aug.stage2)}};
        if (aug.flat) {
          record["summary"] = aug.summary;
        } else {
          record["utterances"] = nlohmann::json::array();
          for (const auto& u : aug.utterances) {
            record["utterances"].push_back({{"speaker", speaker_name(u.speaker)}, {"text", u.text}});
          }
        }
        out << record.dump() << '\n';
      }
      if (failures > 0) err << "warning: " << failures << " stage-1 provider failures fell back to none\n";
      return 0;
    }
    if (dump_cmd->parsed()) {
      const auto graph = load_graph(kg_dir);
      const auto cp = load_checkpoint(ckpt_path);
      std::ofstream file(out_path);
      if (!file) throw LoadError("cannot write " + out_path);
      const auto count = dump_embeddings(cp, graph.kg, graph.index, file);
      out << "wrote " << count << " embeddings to " << out_path << '\n';
      return 0;
    }
    if (rec_cmd->parsed()) {
      const auto graph = load_graph(kg_dir);
      const auto cp = load_checkpoint(ckpt_path);
      const auto encoder = make_encoder(cp.model.encoder, static_cast<std::size_t>(cp.model.d_llm));
      const Recommender recommender(cp, graph.kg, graph.index, *encoder);
      std::ifstream file(dialogue_path);
      if (!file) throw LoadError("cannot open " + dialogue_path);
      std::stringstream text;
      text << file.rdbuf();
      const auto dialogue = parse_dialogue_record(text.str(), graph.kg);
      const EntityLinker linker(graph.kg);
      std::vector<EntityId> entities;
      const auto add = [&](EntityId id) {
        if (std::find(entities.begin(), entities.end(), id) == entities.end()) entities.push_back(id);
      };
      for (std::size_t i = 0; i < dialogue.utterances.size(); ++i) {
        const auto& u = dialogue.utterances[i];
        for (const auto id : u.entities) add(id);
        for (const auto& m : linker.link(u.text, i)) add(m.entity_id);
      }
      const auto list = recommender.recommend(dialogue.utterances, entities, k, exclude_mentioned);
      for (std::size_t i = 0; i < list.ranked.size(); ++i) {
        out << (i + 1) << '\t' << graph.kg.entity(list.ranked[i].item).name << '\t'
            << std::setprecision(6) << list.ranked[i].score << '\n';
      }
      return 0;
    }
    if (serve_cmd->parsed()) {
      const auto graph = load_graph(kg_dir);
      const auto cp = load_checkpoint(ckpt_path);
      const auto encoder = make_encoder(cp.model.encoder, static_cast<std::size_t>(cp.model.d_llm));
      const Recommender recommender(cp, graph.kg, graph.index, *encoder);
      ServiceOptions options;
      options.cors_origin = cors;
      RecommendationService service(recommender, options);
      httplib::Server server;
      service.attach(server);
      const auto [host, port] = parse_bind_address(bind);
      if (!server.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + bind);
      out << "serving on " << host << ':' << port << std::endl;
      server.listen_after_bind();
      return 0;
    }
    if (synth_cmd->parsed()) {
      const auto data = generate_synthetic(spec);
      const auto [train_set, test_set] = split_dialogues(data.dialogues, test_fraction);
      const fs::path root(out_path);
      write_kg_dir(data.kg, root / "kg");
      fs::create_directories(root / "data");
      std::ofstream train_file(root / "data" / "train.jsonl");
      std::ofstream test_file(root / "data" / "test.jsonl");
      write_dialogues(train_set, data.kg, train_file);
      write_dialogues(test_set, data.kg, test_file);
      out << "wrote " << data.kg.num_entities() << " entities, " << train_set.size() << " train and "
          << test_set.size() << " test dialogues under " << root.string() << '\n';
      return 0;
    }
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace dacrs
