#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dacrs/config.hpp"
#include "dacrs/errors.hpp"
#include "dacrs/kg.hpp"
#include "dacrs/rng.hpp"

namespace dacrs {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Row-vector convention throughout: an entity embedding is a row, and a
// weight matrix acts from the right (h W).

template <typename Scalar>
struct RgcnLayer {
  std::vector<Matrix<Scalar>> relation;  // d x d per relation
  Matrix<Scalar> self;                   // d x d
};

template <typename Scalar>
struct ModelParams {
  Matrix<Scalar> base;  // |E| x d, layer-0 entity embeddings
  std::vector<RgcnLayer<Scalar>> layers;
  Matrix<Scalar> query;          // d_llm x d
  Matrix<Scalar> key;            // d x d
  Matrix<Scalar> value;          // d x d
  Matrix<Scalar> dialogue_proj;  // d_llm x d
  Scalar fusion_raw = Scalar(0);

  /// Fusion weight, logistic(fusion_raw), always in (0, 1).
  Scalar fusion_weight() const { return Scalar(1) / (Scalar(1) + std::exp(-fusion_raw)); }

  /// Same shapes, all zero.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.set_zero();
    return z;
  }

  void set_zero() {
    visit([](const std::string&, auto data) { data.setZero(); });
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.base = base.template cast<Other>();
    for (const auto& layer : layers) {
      RgcnLayer<Other> l;
      for (const auto& w : layer.relation) l.relation.push_back(w.template cast<Other>());
      l.self = layer.self.template cast<Other>();
      out.layers.push_back(std::move(l));
    }
    out.query = query.template cast<Other>();
    out.key = key.template cast<Other>();
    out.value = value.template cast<Other>();
    out.dialogue_proj = dialogue_proj.template cast<Other>();
    out.fusion_raw = static_cast<Other>(fusion_raw);
    return out;
  }

  /// Calls f(name, flat view) for every tensor in a fixed order. The scalar
  /// fusion parameter is exposed as a length-1 view.
  template <typename F>
  void visit(F&& f) {
    using Map = Eigen::Map<Vector<Scalar>>;
    f("base", Map(base.data(), base.size()));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t r = 0; r < layers[l].relation.size(); ++r) {
        auto& w = layers[l].relation[r];
        f("rgcn." + std::to_string(l) + ".relation." + std::to_string(r), Map(w.data(), w.size()));
      }
      f("rgcn." + std::to_string(l) + ".self", Map(layers[l].self.data(), layers[l].self.size()));
    }
    f("attention.query", Map(query.data(), query.size()));
    f("attention.key", Map(key.data(), key.size()));
    f("attention.value", Map(value.data(), value.size()));
    f("fusion.dialogue_proj", Map(dialogue_proj.data(), dialogue_proj.size()));
    f("fusion.raw", Map(&fusion_raw, 1));
  }

  template <typename F>
  void visit(F&& f) const {
    using Map = Eigen::Map<const Vector<Scalar>>;
    f("base", Map(base.data(), base.size()));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t r = 0; r < layers[l].relation.size(); ++r) {
        const auto& w = layers[l].relation[r];
        f("rgcn." + std::to_string(l) + ".relation." + std::to_string(r), Map(w.data(), w.size()));
      }
      f("rgcn." + std::to_string(l) + ".self", Map(layers[l].self.data(), layers[l].self.size()));
    }
    f("attention.query", Map(query.data(), query.size()));
    f("attention.key", Map(key.data(), key.size()));
    f("attention.value", Map(value.data(), value.size()));
    f("fusion.dialogue_proj", Map(dialogue_proj.data(), dialogue_proj.size()));
    f("fusion.raw", Map(&fusion_raw, 1));
  }
};

/// Uniform in [-1/sqrt(d), 1/sqrt(d)] for every tensor; fusion_raw = 0.
ModelParams<double> init_params(const ModelConfig& config, std::size_t num_entities,
                                std::size_t num_relations, Rng& rng);

/// Throws ConfigError unless every tensor matches config and graph sizes.
template <typename Scalar>
void check_shapes(const ModelParams<Scalar>& p, const ModelConfig& c, std::size_t num_entities,
                  std::size_t num_relations) {
  const auto d = static_cast<Eigen::Index>(c.d);
  const auto dl = static_cast<Eigen::Index>(c.d_llm);
  const auto fail = [](const std::string& what) { throw ConfigError("shape mismatch: " + what); };
  if (p.base.rows() != static_cast<Eigen::Index>(num_entities) || p.base.cols() != d)
    fail("base table is " + std::to_string(p.base.rows()) + "x" + std::to_string(p.base.cols()) +
         ", expected " + std::to_string(num_entities) + "x" + std::to_string(d));
  if (p.layers.size() != static_cast<std::size_t>(c.rgcn_layers)) fail("rgcn layer count");
  for (const auto& layer : p.layers) {
    if (layer.relation.size() != num_relations) fail("relation count");
    for (const auto& w : layer.relation)
      if (w.rows() != d || w.cols() != d) fail("relation weight");
    if (layer.self.rows() != d || layer.self.cols() != d) fail("self-loop weight");
  }
  if (p.query.rows() != dl || p.query.cols() != d) fail("query projection");
  if (p.key.rows() != d || p.key.cols() != d) fail("key projection");
  if (p.value.rows() != d || p.value.cols() != d) fail("value projection");
  if (p.dialogue_proj.rows() != dl || p.dialogue_proj.cols() != d) fail("dialogue projection");
}

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

/// In-place softmax of a vector; returns log-sum-exp of the input.
template <typename Scalar>
Scalar softmax_inplace(Eigen::Ref<Vector<Scalar>> v) {
  const Scalar peak = v.maxCoeff();
  v = (v.array() - peak).exp();
  const Scalar total = v.sum();
  v /= total;
  return peak + std::log(total);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Relational graph convolution

template <typename Scalar>
struct RgcnTrace {
  std::vector<Matrix<Scalar>> inputs;                 // h^(l)
  std::vector<std::vector<Matrix<Scalar>>> messages;  // A_r h^(l) per layer, relation
  std::vector<Matrix<Scalar>> pre;                    // pre-activation per layer
};

/// h^(l+1) = act( sum_r A_r h^(l) W_r + h^(l) W_0 ), A_r row-normalized by c_{m,r}.
template <typename Scalar>
Matrix<Scalar> rgcn_forward(const ModelParams<Scalar>& p, const KgIndex& index,
                            const ModelConfig& config, RgcnTrace<Scalar>* trace = nullptr) {
  if (static_cast<std::size_t>(p.base.rows()) != index.num_entities() ||
      p.base.cols() != config.d) {
    throw ConfigError("rgcn_forward: base table does not match graph or config");
  }
  if (trace) *trace = {};
  Matrix<Scalar> h = p.base;
  for (const auto& layer : p.layers) {
    if (layer.relation.size() != index.num_relations()) {
      throw ConfigError("rgcn_forward: relation weight count does not match graph");
    }
    Matrix<Scalar> pre = h * layer.self;
    std::vector<Matrix<Scalar>> messages;
    for (std::size_t r = 0; r < layer.relation.size(); ++r) {
      Matrix<Scalar> msg =
          (index.normalized_adjacency(static_cast<RelationId>(r)) * h.template cast<double>())
              .template cast<Scalar>();
      pre.noalias() += msg * layer.relation[r];
      if (trace) messages.push_back(std::move(msg));
    }
    if (trace) {
      trace->inputs.push_back(h);
      trace->messages.push_back(std::move(messages));
      trace->pre.push_back(pre);
    }
    h = config.activation == Activation::relu ? Matrix<Scalar>(pre.cwiseMax(Scalar(0))) : pre;
  }
  return h;
}

/// Accumulates into grad the gradient of a loss whose derivative with
/// respect to the RGCN output is d_output.
template <typename Scalar>
void rgcn_backward(const ModelParams<Scalar>& p, const KgIndex& index, const ModelConfig& config,
                   const RgcnTrace<Scalar>& trace, Matrix<Scalar> d_output,
                   ModelParams<Scalar>& grad) {
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const auto& layer = p.layers[l];
    Matrix<Scalar> d_pre = config.activation == Activation::relu
                               ? Matrix<Scalar>((trace.pre[l].array() > Scalar(0))
                                                    .select(d_output, Scalar(0)))
                               : d_output;
    grad.layers[l].self.noalias() += trace.inputs[l].transpose() * d_pre;
    Matrix<Scalar> d_input = d_pre * layer.self.transpose();
    for (std::size_t r = 0; r < layer.relation.size(); ++r) {
      grad.layers[l].relation[r].noalias() += trace.messages[l][r].transpose() * d_pre;
      const Matrix<double> d_msg = (d_pre * layer.relation[r].transpose()).template cast<double>();
      d_input += (index.normalized_adjacency(static_cast<RelationId>(r)).transpose() * d_msg)
                     .template cast<Scalar>();
    }
    d_output = std::move(d_input);
  }
  grad.base += d_output;
}

// ---------------------------------------------------------------------------
// Dialogue-guided attention

template <typename Scalar>
struct AttentionTrace {
  RowVector<Scalar> query;
  Matrix<Scalar> keys;
  Matrix<Scalar> values;
  Matrix<Scalar> weights;  // heads x n, each row a probability vector
};

/// h_n = softmax(q K^T / sqrt(d_head)) V with q = s W_Q, K = H W_K, V = H W_V.
/// With several heads the width is split evenly and head outputs are
/// concatenated. entity_rows must be non-empty.
template <typename Scalar>
RowVector<Scalar> attention_aggregate(const RowVector<Scalar>& dialogue,
                                      const Matrix<Scalar>& entity_rows,
                                      const ModelParams<Scalar>& p, int heads = 1,
                                      AttentionTrace<Scalar>* trace = nullptr) {
  if (entity_rows.rows() == 0) throw ArgumentError("attention_aggregate needs at least one entity");
  const auto d = p.key.cols();
  const auto width = d / heads;
  const auto n = entity_rows.rows();
  AttentionTrace<Scalar> local;
  auto& t = trace ? *trace : local;
  t.query = dialogue * p.query;
  t.keys = entity_rows * p.key;
  t.values = entity_rows * p.value;
  t.weights.resize(heads, n);
  RowVector<Scalar> out(d);
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(width));
  for (int h = 0; h < heads; ++h) {
    const auto c0 = h * width;
    Vector<Scalar> w = t.keys.middleCols(c0, width) * t.query.segment(c0, width).transpose() * scale;
    detail::softmax_inplace<Scalar>(w);
    t.weights.row(h) = w.transpose();
    out.segment(c0, width) = w.transpose() * t.values.middleCols(c0, width);
  }
  return out;
}

/// Backward of attention_aggregate. Accumulates parameter gradients into
/// grad and returns the gradient with respect to entity_rows.
template <typename Scalar>
Matrix<Scalar> attention_backward(const RowVector<Scalar>& dialogue,
                                  const Matrix<Scalar>& entity_rows, const ModelParams<Scalar>& p,
                                  int heads, const AttentionTrace<Scalar>& t,
                                  const RowVector<Scalar>& d_output, ModelParams<Scalar>& grad) {
  const auto d = p.key.cols();
  const auto width = d / heads;
  const auto n = entity_rows.rows();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(width));
  Matrix<Scalar> d_keys = Matrix<Scalar>::Zero(n, d);
  Matrix<Scalar> d_values = Matrix<Scalar>::Zero(n, d);
  RowVector<Scalar> d_query = RowVector<Scalar>::Zero(d);
  for (int h = 0; h < heads; ++h) {
    const auto c0 = h * width;
    const Vector<Scalar> w = t.weights.row(h).transpose();
    const RowVector<Scalar> d_out = d_output.segment(c0, width);
    const Vector<Scalar> d_w = t.values.middleCols(c0, width) * d_out.transpose();
    d_values.middleCols(c0, width).noalias() += w * d_out;
    const Vector<Scalar> d_score = w.cwiseProduct(d_w.array().matrix() -
                                                  Vector<Scalar>::Constant(n, w.dot(d_w)));
    d_keys.middleCols(c0, width).noalias() += d_score * t.query.segment(c0, width) * scale;
    d_query.segment(c0, width).noalias() +=
        d_score.transpose() * t.keys.middleCols(c0, width) * scale;
  }
  grad.query.noalias() += dialogue.transpose() * d_query;
  grad.key.noalias() += entity_rows.transpose() * d_keys;
  grad.value.noalias() += entity_rows.transpose() * d_values;
  return d_keys * p.key.transpose() + d_values * p.value.transpose();
}

// ---------------------------------------------------------------------------
// Fusion and user encoding

/// u = lambda (s W_S) + (1 - lambda) h_n; with no entities u = s W_S.
template <typename Scalar>
RowVector<Scalar> fuse_user(const RowVector<Scalar>& dialogue,
                            const std::optional<RowVector<Scalar>>& aggregated,
                            const ModelParams<Scalar>& p) {
  RowVector<Scalar> projected = dialogue * p.dialogue_proj;
  if (!aggregated) return projected;
  const Scalar lambda = p.fusion_weight();
  return lambda * projected + (Scalar(1) - lambda) * *aggregated;
}

template <typename Scalar>
struct UserTrace {
  Matrix<Scalar> entity_rows;
  AttentionTrace<Scalar> attention;
  RowVector<Scalar> projected;
  RowVector<Scalar> aggregated;
  bool has_entities = false;
};

/// Full user path for one sample: gather the mentioned entity rows from the
/// RGCN output, attend, and fuse with the projected dialogue embedding.
template <typename Scalar>
RowVector<Scalar> user_forward(const ModelParams<Scalar>& p, const ModelConfig& config,
                               const Matrix<Scalar>& entity_embeddings,
                               const RowVector<Scalar>& dialogue,
                               const std::vector<EntityId>& context_entities,
                               UserTrace<Scalar>* trace = nullptr) {
  if (dialogue.size() != p.query.rows()) {
    throw ConfigError("dialogue embedding width " + std::to_string(dialogue.size()) +
                      " does not match d_llm " + std::to_string(p.query.rows()));
  }
  UserTrace<Scalar> local;
  auto& t = trace ? *trace : local;
  t.projected = dialogue * p.dialogue_proj;
  t.has_entities = !context_entities.empty();
  if (!t.has_entities) return t.projected;
  t.entity_rows.resize(static_cast<Eigen::Index>(context_entities.size()), entity_embeddings.cols());
  for (std::size_t i = 0; i < context_entities.size(); ++i) {
    t.entity_rows.row(static_cast<Eigen::Index>(i)) = entity_embeddings.row(context_entities[i]);
  }
  t.aggregated = attention_aggregate<Scalar>(dialogue, t.entity_rows, p, config.heads, &t.attention);
  const Scalar lambda = p.fusion_weight();
  return lambda * t.projected + (Scalar(1) - lambda) * t.aggregated;
}

/// Backward of user_forward. Accumulates parameter gradients into grad and
/// scatter-adds entity-row gradients into d_entity_embeddings.
template <typename Scalar>
void user_backward(const ModelParams<Scalar>& p, const ModelConfig& config,
                   const RowVector<Scalar>& dialogue,
                   const std::vector<EntityId>& context_entities, const UserTrace<Scalar>& t,
                   const RowVector<Scalar>& d_user, ModelParams<Scalar>& grad,
                   Matrix<Scalar>& d_entity_embeddings) {
  if (!t.has_entities) {
    grad.dialogue_proj.noalias() += dialogue.transpose() * d_user;
    return;
  }
  const Scalar lambda = p.fusion_weight();
  grad.dialogue_proj.noalias() += dialogue.transpose() * (lambda * d_user);
  grad.fusion_raw += d_user.dot(t.projected - t.aggregated) * lambda * (Scalar(1) - lambda);
  const RowVector<Scalar> d_aggregated = (Scalar(1) - lambda) * d_user;
  const Matrix<Scalar> d_rows = attention_backward<Scalar>(dialogue, t.entity_rows, p, config.heads,
                                                           t.attention, d_aggregated, grad);
  for (std::size_t i = 0; i < context_entities.size(); ++i) {
    d_entity_embeddings.row(context_entities[i]) += d_rows.row(static_cast<Eigen::Index>(i));
  }
}

// ---------------------------------------------------------------------------
// Scoring and ranking

/// Dot product of the user vector with each row.
template <typename Scalar>
Vector<Scalar> score_items(const RowVector<Scalar>& user, const Matrix<Scalar>& item_rows) {
  if (item_rows.cols() != user.size()) throw ConfigError("score_items: width mismatch");
  return item_rows * user.transpose();
}

struct ScoredItem {
  EntityId item;
  double score;
};

/// Items ranked by score descending, ties by ascending id; k is clamped to
/// the number of available items.
struct RecommendationList {
  std::vector<ScoredItem> ranked;
};

/// Ranks kg items against the user vector. `exclusions` are removed before
/// ranking; non-item ids in it are ignored.
RecommendationList recommend(const RowVector<double>& user, const Matrix<double>& entity_embeddings,
                             const Kg& kg, std::size_t k,
                             const std::vector<EntityId>& exclusions = {});

}  // namespace dacrs
