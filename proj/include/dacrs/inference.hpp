#pragma once

#include <vector>

#include "dacrs/checkpoint.hpp"
#include "dacrs/corpus.hpp"
#include "dacrs/encoder.hpp"

namespace dacrs {

/// Read-only forward path over a trained checkpoint. Entity embeddings are
/// computed once at construction; all member functions are const and safe
/// to call concurrently.
class Recommender {
 public:
  /// Throws ConfigError when the checkpoint does not fit the graph or the
  /// encoder width.
  Recommender(Checkpoint checkpoint, const Kg& kg, const KgIndex& index,
              const DialogueEncoder& encoder);

  RowVector<double> user_vector(const std::vector<Utterance>& context,
                                const std::vector<EntityId>& context_entities) const;
  RowVector<double> user_vector(const RowVector<double>& dialogue,
                                const std::vector<EntityId>& context_entities) const;

  RecommendationList recommend(const std::vector<Utterance>& context,
                               const std::vector<EntityId>& context_entities, std::size_t k,
                               bool exclude_mentioned) const;

  const Matrix<double>& entity_embeddings() const noexcept { return embeddings_; }
  const Checkpoint& checkpoint() const noexcept { return checkpoint_; }
  const Kg& kg() const noexcept { return kg_; }
  const DialogueEncoder& encoder() const noexcept { return encoder_; }

 private:
  Checkpoint checkpoint_;
  const Kg& kg_;
  const DialogueEncoder& encoder_;
  Matrix<double> embeddings_;
};

}  // namespace dacrs
