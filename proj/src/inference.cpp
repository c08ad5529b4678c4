#include "dacrs/inference.hpp"

#include "dacrs/augment.hpp"

namespace dacrs {

Recommender::Recommender(Checkpoint checkpoint, const Kg& kg, const KgIndex& index,
                         const DialogueEncoder& encoder)
    : checkpoint_(std::move(checkpoint)), kg_(kg), encoder_(encoder) {
  check_shapes(checkpoint_.params, checkpoint_.model, kg.num_entities(), kg.num_relations());
  if (encoder.dimension() != static_cast<std::size_t>(checkpoint_.model.d_llm)) {
    throw ConfigError("encoder dimension " + std::to_string(encoder.dimension()) +
                      " does not match checkpoint d_llm " + std::to_string(checkpoint_.model.d_llm));
  }
  embeddings_ = rgcn_forward<double>(checkpoint_.params, index, checkpoint_.model);
}

RowVector<double> Recommender::user_vector(const RowVector<double>& dialogue,
                                           const std::vector<EntityId>& context_entities) const {
  auto u = user_forward<double>(checkpoint_.params, checkpoint_.model, embeddings_, dialogue,
                                context_entities);
  if (!u.allFinite()) throw NumericError("user vector is not finite");
  return u;
}

RowVector<double> Recommender::user_vector(const std::vector<Utterance>& context,
                                           const std::vector<EntityId>& context_entities) const {
  return user_vector(encoder_.encode(serialize_dialogue(context)).vector, context_entities);
}

RecommendationList Recommender::recommend(const std::vector<Utterance>& context,
                                          const std::vector<EntityId>& context_entities,
                                          std::size_t k, bool exclude_mentioned) const {
  return dacrs::recommend(user_vector(context, context_entities), embeddings_, kg_, k,
                          exclude_mentioned ? context_entities : std::vector<EntityId>{});
}

}  // namespace dacrs
