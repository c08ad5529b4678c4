#include "dacrs/trainer.hpp"

#include <cmath>
#include <unordered_map>

namespace dacrs {

void AdamW::step(ModelParams<double>& params, const ModelParams<double>& grad) {
  std::vector<Eigen::Map<const Vector<double>>> grads;
  grad.visit([&](const std::string&, auto data) { grads.push_back(data); });
  if (m_.empty()) {
    for (const auto& g : grads) {
      m_.push_back(Vector<double>::Zero(g.size()));
      v_.push_back(Vector<double>::Zero(g.size()));
    }
  }
  ++t_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t i = 0;
  params.visit([&](const std::string&, auto p) {
    const auto& g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
    const auto update = (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps_);
    p.array() -= lr_ * (update + wd_ * p.array());
    ++i;
  });
}

namespace {

class EmbeddingCache {
 public:
  explicit EmbeddingCache(const DialogueEncoder& encoder) : encoder_(encoder) {}

  const RowVector<double>& get(const std::string& text) {
    auto it = cache_.find(text);
    if (it == cache_.end()) it = cache_.emplace(text, encoder_.encode(text).vector).first;
    return it->second;
  }

 private:
  const DialogueEncoder& encoder_;
  std::unordered_map<std::string, RowVector<double>> cache_;
};

constexpr std::uint64_t kInitStream = 0x696e6974;     // "init"
constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kNegativeStream = 0x6e656773; // "negs"

}  // namespace

TrainResult train(const std::vector<TrainingSample>& samples, const Kg& kg, const KgIndex& index,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainContext& context) {
  model_config.validate();
  train_config.validate();
  if (samples.empty()) throw ArgumentError("training set is empty");
  if (context.encoder == nullptr) throw ConfigError("train: no dialogue encoder");
  if (context.encoder->dimension() != static_cast<std::size_t>(model_config.d_llm)) {
    throw ConfigError("encoder dimension " + std::to_string(context.encoder->dimension()) +
                      " does not match d_llm " + std::to_string(model_config.d_llm));
  }
  const bool stage1 = train_config.stage1 != "off";
  if (stage1 && context.rewriter == nullptr) throw ConfigError("stage1 enabled without a provider");

  Rng init_rng(derive_seed(model_config.seed, kInitStream));
  TrainResult result;
  result.params = init_params(model_config, kg.num_entities(), kg.num_relations(), init_rng);
  auto& params = result.params;

  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> holdout_ids;
  const auto stride = train_config.holdout_fraction > 0.0
                          ? std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(1.0 / train_config.holdout_fraction)))
                          : 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (stride > 0 && i % stride == stride - 1 ? holdout_ids : train_ids).push_back(i);
  }
  if (train_ids.empty()) throw ArgumentError("holdout leaves no training samples");

  EmbeddingCache embeddings(*context.encoder);
  AdamW optimizer(train_config.learning_rate, train_config.weight_decay);
  const AugmentConfig augment{train_config.augmentation_rate, stage1, train_config.seed};
  Rng shuffle_rng(derive_seed(train_config.seed, kShuffleStream));

  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    LossReport report;
    auto order = train_ids;
    shuffle_rng.shuffle(order.begin(), order.end());
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += train_config.batch_size, ++batch_index) {
      const auto end = std::min(order.size(), start + train_config.batch_size);
      std::vector<PreparedSample<double>> batch;
      batch.reserve(end - start);
      for (std::size_t pos = start; pos < end; ++pos) {
        const auto& sample = samples[order[pos]];
        Rng rng(derive_seed(train_config.seed, static_cast<std::uint64_t>(epoch) + 1, order[pos] + 1));
        const auto augmented = run_pipeline(sample.context, augment, context.rewriter, rng);
        report.provider_failures += augmented.provider_failed ? 1 : 0;
        batch.push_back({embeddings.get(augmented.text()),
                         substitute_entities(sample.context_entities, index,
                                             train_config.substitution_rate, rng),
                         sample.targets});
      }
      std::optional<EntityNegatives> negatives;
      if (train_config.entity_negatives > 0) {
        Rng neg_rng(derive_seed(train_config.seed, kNegativeStream,
                                (static_cast<std::uint64_t>(epoch) << 32) | batch_index));
        negatives = sample_entity_negatives(index, train_config.entity_negatives, neg_rng);
      }
      LossAndGrad<double> step;
      try {
        step = total_loss_and_grad<double>(batch, params, index, model_config, train_config.alpha,
                                           negatives ? &*negatives : nullptr);
        const double scale = 1.0 / static_cast<double>(batch.size());
        step.grad.visit([&](const std::string&, auto g) { g *= scale; });
        optimizer.step(params, step.grad);
        params.visit([&](const std::string& name, auto p) {
          if (!p.allFinite()) throw NumericError("parameter " + name + " became non-finite");
        });
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      report.batches.push_back({step.rec_loss, step.entity_loss, step.total});
    }
    for (const auto& b : report.batches) {
      report.rec_loss += b.rec_loss;
      report.entity_loss += b.entity_loss;
    }
    report.rec_loss /= static_cast<double>(report.batches.size());
    report.entity_loss /= static_cast<double>(report.batches.size());
    report.total = report.rec_loss + train_config.alpha * report.entity_loss;

    if (!holdout_ids.empty()) {
      const auto h = rgcn_forward<double>(params, index, model_config);
      Matrix<double> users(static_cast<Eigen::Index>(holdout_ids.size()), h.cols());
      std::vector<std::vector<EntityId>> targets;
      for (std::size_t i = 0; i < holdout_ids.size(); ++i) {
        const auto& sample = samples[holdout_ids[i]];
        users.row(static_cast<Eigen::Index>(i)) =
            user_forward<double>(params, model_config, h,
                                 embeddings.get(serialize_dialogue(sample.context)),
                                 sample.context_entities);
        targets.push_back(sample.targets);
      }
      report.holdout_rec_loss = rec_loss<double>(users, targets, h) / static_cast<double>(holdout_ids.size());
    }
    if (context.on_epoch) context.on_epoch(epoch + 1, report);
    result.epochs.push_back(std::move(report));
  }
  result.checkpoint = Checkpoint::from_params(params, model_config, train_config,
                                              train_config.epochs, shuffle_rng.digest());
  return result;
}

}  // namespace dacrs
