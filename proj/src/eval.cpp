#include "dacrs/eval.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

namespace dacrs {

double recall_at_k(const RecommendationList& recommendations, const std::vector<EntityId>& targets,
                   std::size_t k) {
  if (k == 0) throw ArgumentError("k must be at least 1");
  if (targets.empty()) throw ArgumentError("recall needs at least one target");
  const std::unordered_set<EntityId> wanted(targets.begin(), targets.end());
  std::size_t hits = 0;
  const auto limit = std::min(k, recommendations.ranked.size());
  for (std::size_t i = 0; i < limit; ++i) hits += wanted.contains(recommendations.ranked[i].item);
  return static_cast<double>(hits) / static_cast<double>(wanted.size());
}

namespace {

void normalize_ks(std::vector<std::size_t>& ks) {
  if (ks.empty()) throw ArgumentError("at least one k is required");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() == 0) throw ArgumentError("k must be at least 1");
}

void finish(EvalReport& report) {
  report.num_test_samples = report.per_sample.size();
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    double total = 0.0;
    for (const auto& row : report.per_sample) total += row[i];
    report.recall_at[report.ks[i]] =
        report.per_sample.empty() ? 0.0 : total / static_cast<double>(report.per_sample.size());
  }
}

void add_sample(EvalReport& report, const RecommendationList& list, const TestSample& sample) {
  std::vector<double> row;
  row.reserve(report.ks.size());
  for (const auto k : report.ks) row.push_back(recall_at_k(list, sample.target_items, k));
  report.per_sample.push_back(std::move(row));
}

}  // namespace

EvalReport evaluate(const Recommender& recommender, const std::vector<TestSample>& samples,
                    std::vector<std::size_t> ks, bool exclude_mentioned) {
  normalize_ks(ks);
  EvalReport report;
  report.ks = ks;
  for (const auto& sample : samples) {
    const auto list = recommender.recommend(sample.context, sample.context_entities, ks.back(),
                                            exclude_mentioned);
    add_sample(report, list, sample);
  }
  finish(report);
  return report;
}

EvalReport popularity_baseline(const std::vector<TrainingSample>& train_samples,
                               const std::vector<TestSample>& test_samples, const Kg& kg,
                               std::vector<std::size_t> ks) {
  normalize_ks(ks);
  std::vector<std::size_t> counts(kg.num_entities(), 0);
  for (const auto& s : train_samples)
    for (const auto id : s.targets)
      if (kg.is_item(id)) ++counts[static_cast<std::size_t>(id)];
  RecommendationList list;
  for (const auto item : kg.items()) list.ranked.push_back({item, static_cast<double>(counts[static_cast<std::size_t>(item)])});
  std::stable_sort(list.ranked.begin(), list.ranked.end(),
                   [](const ScoredItem& a, const ScoredItem& b) { return a.score > b.score; });
  EvalReport report;
  report.ks = ks;
  for (const auto& sample : test_samples) add_sample(report, list, sample);
  finish(report);
  return report;
}

void print_report(const EvalReport& report, std::ostream& out) {
  out << "metric      value\n";
  for (const auto& [k, value] : report.recall_at) {
    out << std::left << std::setw(12) << ("recall@" + std::to_string(k)) << std::fixed
        << std::setprecision(4) << value << '\n';
  }
  out << "test samples: " << report.num_test_samples << '\n';
}

void write_metrics(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write metrics file " + path.string());
  for (const auto& [k, value] : report.recall_at) {
    out << nlohmann::json{{"metric", "recall@" + std::to_string(k)},
                          {"k", k},
                          {"value", value},
                          {"num_test_samples", report.num_test_samples}}
               .dump()
        << '\n';
  }
}

SweepParam parse_sweep_param(const std::string& name) {
  if (name == "alpha") return SweepParam::alpha;
  if (name == "substitution_rate") return SweepParam::substitution_rate;
  if (name == "augmentation_rate") return SweepParam::augmentation_rate;
  throw ArgumentError("unknown sweep parameter '" + name + "'");
}

const char* to_string(SweepParam p) noexcept {
  switch (p) {
    case SweepParam::substitution_rate: return "substitution_rate";
    case SweepParam::augmentation_rate: return "augmentation_rate";
    default: return "alpha";
  }
}

namespace {

SweepPoint run_point(const SweepOptions& options, const RunConfig& base, std::size_t point,
                     const std::vector<TrainingSample>& train_samples,
                     const std::vector<TestSample>& test_samples, const Kg& kg,
                     const KgIndex& index, const TrainContext& context) {
  SweepPoint result;
  result.value = options.grid[point];
  result.report.ks = options.ks;
  normalize_ks(result.report.ks);
  for (const auto k : result.report.ks) result.report.recall_at[k] = 0.0;
  for (int run = 0; run < options.runs; ++run) {
    try {
      auto config = base;
      const auto seed = base.train.seed + 1000 * point + static_cast<std::uint64_t>(run);
      config.train.seed = seed;
      config.model.seed = seed;
      switch (options.param) {
        case SweepParam::alpha: config.train.alpha = result.value; break;
        case SweepParam::substitution_rate: config.train.substitution_rate = result.value; break;
        case SweepParam::augmentation_rate: config.train.augmentation_rate = result.value; break;
      }
      TrainContext quiet = context;
      quiet.on_epoch = nullptr;
      auto trained = train(train_samples, kg, index, config.model, config.train, quiet);
      const Recommender recommender(trained.checkpoint, kg, index, *context.encoder);
      const auto report = evaluate(recommender, test_samples, options.ks);
      for (const auto& [k, value] : report.recall_at) result.report.recall_at[k] += value;
      result.report.num_test_samples = report.num_test_samples;
      if (!trained.epochs.empty()) {
        result.final_entity_loss += trained.epochs.back().entity_loss;
        result.final_total_loss += trained.epochs.back().total;
      }
      ++result.successful_runs;
    } catch (const std::exception& e) {
      result.errors.push_back("run " + std::to_string(run) + ": " + e.what());
    }
  }
  if (result.successful_runs > 0) {
    const auto n = static_cast<double>(result.successful_runs);
    for (auto& [k, value] : result.report.recall_at) value /= n;
    result.final_entity_loss /= n;
    result.final_total_loss /= n;
  }
  return result;
}

}  // namespace

SweepResult sweep(const SweepOptions& options, const RunConfig& base,
                  const std::vector<TrainingSample>& train_samples,
                  const std::vector<TestSample>& test_samples, const Kg& kg, const KgIndex& index,
                  const TrainContext& context) {
  if (options.grid.empty()) throw ArgumentError("sweep grid is empty");
  if (options.runs < 1) throw ArgumentError("sweep needs at least one run per point");
  for (const auto v : options.grid) {
    const bool rate = options.param != SweepParam::alpha;
    if (v < 0.0 || (rate && v > 1.0)) {
      throw ArgumentError(std::string("grid value out of range for ") + to_string(options.param));
    }
  }
  SweepResult result;
  result.param = options.param;
  result.runs = options.runs;
  if (options.parallel) {
    std::vector<std::future<SweepPoint>> futures;
    for (std::size_t i = 0; i < options.grid.size(); ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        return run_point(options, base, i, train_samples, test_samples, kg, index, context);
      }));
    }
    for (auto& f : futures) result.points.push_back(f.get());
  } else {
    for (std::size_t i = 0; i < options.grid.size(); ++i) {
      result.points.push_back(
          run_point(options, base, i, train_samples, test_samples, kg, index, context));
    }
  }
  return result;
}

void print_sweep(const SweepResult& result, std::ostream& out) {
  out << std::left << std::setw(20) << to_string(result.param);
  if (!result.points.empty()) {
    for (const auto& [k, v] : result.points.front().report.recall_at) {
      out << std::setw(12) << ("recall@" + std::to_string(k));
    }
  }
  out << std::setw(14) << "entity_loss" << "runs\n";
  for (const auto& p : result.points) {
    out << std::setw(20) << p.value << std::fixed << std::setprecision(4);
    for (const auto& [k, v] : p.report.recall_at) out << std::setw(12) << v;
    out << std::setw(14) << p.final_entity_loss << p.successful_runs << '/' << result.runs << '\n';
    out.unsetf(std::ios::fixed);
    for (const auto& e : p.errors) out << "  error: " << e << '\n';
  }
}

void write_sweep_table(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write sweep table " + path.string());
  out << to_string(result.param);
  if (!result.points.empty()) {
    for (const auto& [k, v] : result.points.front().report.recall_at) out << "\trecall@" << k;
  }
  out << "\tentity_loss\ttotal_loss\truns\n";
  out << std::setprecision(10);
  for (const auto& p : result.points) {
    out << p.value;
    for (const auto& [k, v] : p.report.recall_at) out << '\t' << v;
    out << '\t' << p.final_entity_loss << '\t' << p.final_total_loss << '\t' << p.successful_runs << '\n';
  }
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::size_t dump_embeddings(const Checkpoint& checkpoint, const Kg& kg, const KgIndex& index,
                            std::ostream& out) {
  check_shapes(checkpoint.params, checkpoint.model, kg.num_entities(), kg.num_relations());
  const auto h = rgcn_forward<double>(checkpoint.params, index, checkpoint.model);
  out << "id,name,is_item";
  for (Eigen::Index c = 0; c < h.cols(); ++c) out << ",x" << c;
  out << '\n' << std::setprecision(9);
  for (Eigen::Index m = 0; m < h.rows(); ++m) {
    const auto& e = kg.entity(static_cast<EntityId>(m));
    out << m << ',' << csv_quote(e.name) << ',' << (e.is_item ? 1 : 0);
    for (Eigen::Index c = 0; c < h.cols(); ++c) out << ',' << h(m, c);
    out << '\n';
  }
  if (!out) throw LoadError("failed writing embedding dump");
  return static_cast<std::size_t>(h.rows());
}

}  // namespace dacrs
