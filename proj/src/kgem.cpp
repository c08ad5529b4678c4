#include "dacrs/kgem.hpp"

namespace dacrs {

std::vector<EntityId> substitute_entities(const std::vector<EntityId>& entities,
                                          const KgIndex& index, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ArgumentError("substitution rate must be in [0,1]");
  std::vector<EntityId> out = entities;
  if (rate == 0.0) return out;
  for (auto& id : out) {
    if (!rng.bernoulli(rate)) continue;
    if (const auto neighbor = sample_neighbor(index, id, rng)) id = *neighbor;
  }
  return out;
}

EntityNegatives sample_entity_negatives(const KgIndex& index, std::size_t count, Rng& rng) {
  EntityNegatives negatives;
  const auto n = index.num_entities();
  negatives.candidates.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    auto& cand = negatives.candidates[m];
    const auto& nbrs = index.neighbors(static_cast<EntityId>(m));
    if (nbrs.empty()) continue;
    cand.push_back(static_cast<EntityId>(m));
    cand.insert(cand.end(), nbrs.begin(), nbrs.end());
    for (std::size_t i = 0; i < count; ++i) cand.push_back(static_cast<EntityId>(rng.uniform_index(n)));
  }
  return negatives;
}

}  // namespace dacrs
