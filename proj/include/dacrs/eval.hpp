#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dacrs/inference.hpp"
#include "dacrs/trainer.hpp"

namespace dacrs {

/// |targets ∩ top-k| / |targets|.
double recall_at_k(const RecommendationList& recommendations, const std::vector<EntityId>& targets,
                   std::size_t k);

struct EvalReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> recall_at;  // macro average over samples
  std::size_t num_test_samples = 0;
  std::vector<std::vector<double>> per_sample;  // [sample][index into ks]
};

/// Ranks items for every test sample from its raw context (no augmentation,
/// no substitution) and averages per-sample recall.
EvalReport evaluate(const Recommender& recommender, const std::vector<TestSample>& samples,
                    std::vector<std::size_t> ks, bool exclude_mentioned = false);

/// Ranks every test sample against the same list: items by descending
/// frequency among training targets, ties by ascending id.
EvalReport popularity_baseline(const std::vector<TrainingSample>& train_samples,
                               const std::vector<TestSample>& test_samples, const Kg& kg,
                               std::vector<std::size_t> ks);

void print_report(const EvalReport& report, std::ostream& out);
/// One JSON record per metric.
void write_metrics(const EvalReport& report, const std::filesystem::path& path);

enum class SweepParam { alpha, substitution_rate, augmentation_rate };
SweepParam parse_sweep_param(const std::string& name);
const char* to_string(SweepParam p) noexcept;

struct SweepOptions {
  SweepParam param = SweepParam::alpha;
  std::vector<double> grid;
  int runs = 5;
  std::vector<std::size_t> ks = {1, 10, 50};
  bool parallel = false;
};

struct SweepPoint {
  double value = 0.0;
  EvalReport report;  // averaged over successful runs
  double final_entity_loss = 0.0;
  double final_total_loss = 0.0;
  int successful_runs = 0;
  std::vector<std::string> errors;
};

struct SweepResult {
  SweepParam param = SweepParam::alpha;
  std::vector<SweepPoint> points;
  int runs = 0;
};

/// Trains and evaluates each grid value. Point i, run r uses seed
/// base + 1000 i + r for both model init and data order. A failed run is
/// recorded in the point's errors and the sweep continues.
SweepResult sweep(const SweepOptions& options, const RunConfig& base,
                  const std::vector<TrainingSample>& train_samples,
                  const std::vector<TestSample>& test_samples, const Kg& kg, const KgIndex& index,
                  const TrainContext& context);

void print_sweep(const SweepResult& result, std::ostream& out);
/// Tab-separated, one row per grid value; plot-ready.
void write_sweep_table(const SweepResult& result, const std::filesystem::path& path);

/// CSV with header `id,name,is_item,x0..x{d-1}`; one row per entity holding
/// its post-RGCN embedding. Returns the number of data rows.
std::size_t dump_embeddings(const Checkpoint& checkpoint, const Kg& kg, const KgIndex& index,
                            std::ostream& out);

}  // namespace dacrs
