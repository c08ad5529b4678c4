#include "dacrs/model.hpp"

#include <algorithm>
#include <unordered_set>

namespace dacrs {

ModelParams<double> init_params(const ModelConfig& config, std::size_t num_entities,
                                std::size_t num_relations, Rng& rng) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.d);
  const auto dl = static_cast<Eigen::Index>(config.d_llm);
  ModelParams<double> p;
  p.base.resize(static_cast<Eigen::Index>(num_entities), d);
  for (int l = 0; l < config.rgcn_layers; ++l) {
    RgcnLayer<double> layer;
    layer.relation.assign(num_relations, Matrix<double>(d, d));
    layer.self.resize(d, d);
    p.layers.push_back(std::move(layer));
  }
  p.query.resize(dl, d);
  p.key.resize(d, d);
  p.value.resize(d, d);
  p.dialogue_proj.resize(dl, d);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d));
  p.visit([&](const std::string& name, auto data) {
    if (name == "fusion.raw") return;
    for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = rng.uniform(-bound, bound);
  });
  p.fusion_raw = 0.0;
  return p;
}

RecommendationList recommend(const RowVector<double>& user, const Matrix<double>& entity_embeddings,
                             const Kg& kg, std::size_t k, const std::vector<EntityId>& exclusions) {
  if (k == 0) throw ArgumentError("k must be at least 1");
  const std::unordered_set<EntityId> excluded(exclusions.begin(), exclusions.end());
  RecommendationList list;
  list.ranked.reserve(kg.num_items());
  for (const auto item : kg.items()) {
    if (excluded.contains(item)) continue;
    list.ranked.push_back({item, entity_embeddings.row(item).dot(user)});
  }
  const auto better = [](const ScoredItem& a, const ScoredItem& b) {
    return a.score > b.score || (a.score == b.score && a.item < b.item);
  };
  const auto keep = std::min(k, list.ranked.size());
  std::partial_sort(list.ranked.begin(), list.ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                    list.ranked.end(), better);
  list.ranked.resize(keep);
  return list;
}

}  // namespace dacrs
