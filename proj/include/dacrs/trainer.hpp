#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dacrs/augment.hpp"
#include "dacrs/checkpoint.hpp"
#include "dacrs/corpus.hpp"
#include "dacrs/encoder.hpp"
#include "dacrs/kgem.hpp"

namespace dacrs {

namespace detail {

template <typename Scalar>
Scalar rec_loss_kernel(const Matrix<Scalar>& users, const std::vector<std::vector<EntityId>>& targets,
                       const Matrix<Scalar>& entities, Matrix<Scalar>* d_users,
                       Matrix<Scalar>* d_entities) {
  if (static_cast<std::size_t>(users.rows()) != targets.size()) {
    throw ArgumentError("rec_loss: one target set per user row is required");
  }
  require_finite(users, "user vectors");
  require_finite(entities, "entity embeddings");
  if (d_users) *d_users = Matrix<Scalar>::Zero(users.rows(), users.cols());
  if (d_entities) *d_entities = Matrix<Scalar>::Zero(entities.rows(), entities.cols());
  Scalar total = Scalar(0);
  for (Eigen::Index n = 0; n < users.rows(); ++n) {
    const auto& t = targets[static_cast<std::size_t>(n)];
    if (t.empty()) throw ArgumentError("rec_loss: empty target set");
    Vector<Scalar> p = entities * users.row(n).transpose();
    Scalar term = Scalar(0);
    for (const auto j : t) term -= p[j];
    const Scalar lse = softmax_inplace<Scalar>(p);
    term += static_cast<Scalar>(t.size()) * lse;
    total += term;
    if (d_users || d_entities) {
      Vector<Scalar> d_logits = static_cast<Scalar>(t.size()) * p;
      for (const auto j : t) d_logits[j] -= Scalar(1);
      if (d_users) d_users->row(n).noalias() = d_logits.transpose() * entities;
      if (d_entities) d_entities->noalias() += d_logits * users.row(n);
    }
  }
  if (!std::isfinite(static_cast<double>(total))) throw NumericError("rec loss is not finite");
  return total;
}

}  // namespace detail

/// Sum over users of -sum_{j in targets} log softmax_k(u . e_k)[j].
template <typename Scalar>
Scalar rec_loss(const Matrix<Scalar>& users, const std::vector<std::vector<EntityId>>& targets,
                const Matrix<Scalar>& entities) {
  return detail::rec_loss_kernel<Scalar>(users, targets, entities, nullptr, nullptr);
}

template <typename Scalar>
Scalar rec_loss_grad(const Matrix<Scalar>& users, const std::vector<std::vector<EntityId>>& targets,
                     const Matrix<Scalar>& entities, Matrix<Scalar>& d_users,
                     Matrix<Scalar>& d_entities) {
  return detail::rec_loss_kernel<Scalar>(users, targets, entities, &d_users, &d_entities);
}

/// A training sample after augmentation, substitution and encoding.
template <typename Scalar>
struct PreparedSample {
  RowVector<Scalar> dialogue;
  std::vector<EntityId> context_entities;
  std::vector<EntityId> targets;
};

struct BatchLoss {
  double rec_loss = 0.0;
  double entity_loss = 0.0;
  double total = 0.0;
};

struct LossReport {
  double rec_loss = 0.0;
  double entity_loss = 0.0;
  double total = 0.0;
  std::vector<BatchLoss> batches;
  std::size_t provider_failures = 0;
  double holdout_rec_loss = 0.0;  // mean per sample; zero without a holdout
};

template <typename Scalar>
struct LossAndGrad {
  Scalar rec_loss = Scalar(0);
  Scalar entity_loss = Scalar(0);
  Scalar total = Scalar(0);
  ModelParams<Scalar> grad;
};

/// L = L_rec + alpha L_entity over one batch and its exact gradient with
/// respect to every parameter tensor. The entity embeddings are computed
/// once and shared by all samples; the dialogue encoder is outside the graph.
template <typename Scalar>
LossAndGrad<Scalar> total_loss_and_grad(const std::vector<PreparedSample<Scalar>>& batch,
                                        const ModelParams<Scalar>& params, const KgIndex& index,
                                        const ModelConfig& config, Scalar alpha,
                                        const EntityNegatives* negatives = nullptr) {
  RgcnTrace<Scalar> rgcn_trace;
  const Matrix<Scalar> h = rgcn_forward<Scalar>(params, index, config, &rgcn_trace);

  const auto b = static_cast<Eigen::Index>(batch.size());
  Matrix<Scalar> users(b, h.cols());
  std::vector<UserTrace<Scalar>> traces(batch.size());
  std::vector<std::vector<EntityId>> targets;
  targets.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    users.row(static_cast<Eigen::Index>(i)) = user_forward<Scalar>(
        params, config, h, batch[i].dialogue, batch[i].context_entities, &traces[i]);
    targets.push_back(batch[i].targets);
  }

  LossAndGrad<Scalar> out;
  out.grad = params.zeros_like();
  Matrix<Scalar> d_users;
  Matrix<Scalar> d_h;
  out.rec_loss = b > 0 ? rec_loss_grad<Scalar>(users, targets, h, d_users, d_h)
                       : Scalar(0);
  if (b == 0) d_h = Matrix<Scalar>::Zero(h.rows(), h.cols());

  Matrix<Scalar> d_entity;
  out.entity_loss = entity_similarity_loss_and_grad<Scalar>(h, index, d_entity, negatives).value;
  d_h += alpha * d_entity;
  out.total = out.rec_loss + alpha * out.entity_loss;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    user_backward<Scalar>(params, config, batch[i].dialogue, batch[i].context_entities, traces[i],
                          d_users.row(static_cast<Eigen::Index>(i)), out.grad, d_h);
  }
  rgcn_backward<Scalar>(params, index, config, rgcn_trace, std::move(d_h), out.grad);
  return out;
}

/// Adaptive-moment optimizer with decoupled weight decay:
/// p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
class AdamW {
 public:
  AdamW(double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelParams<double>& params, const ModelParams<double>& grad);
  long steps() const noexcept { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Vector<double>> m_, v_;
};

struct TrainContext {
  const DialogueEncoder* encoder = nullptr;
  RewriteProvider* rewriter = nullptr;  // required when stage1 is on or fixtures
  std::function<void(int epoch, const LossReport&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  ModelParams<double> params;  // full precision, before rounding for storage
  std::vector<LossReport> epochs;
};

/// Trains from a fresh initialization. Each epoch reshuffles, re-augments and
/// re-substitutes every sample, then steps AdamW once per batch on the
/// batch-mean gradient. Deterministic for a fixed seed and fixture set.
TrainResult train(const std::vector<TrainingSample>& samples, const Kg& kg, const KgIndex& index,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainContext& context);

}  // namespace dacrs
