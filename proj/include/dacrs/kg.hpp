#pragma once

#include <Eigen/Sparse>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dacrs/rng.hpp"

namespace dacrs {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Entity {
  std::string uri;
  std::string name;
  bool is_item = false;
};

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Immutable item-entity knowledge graph with dense ids.
///
/// Entity ids follow catalog order; relation ids follow first appearance in
/// the triple stream. Duplicate triples are dropped on construction.
class Kg {
 public:
  Kg() = default;
  Kg(std::vector<Entity> entities, std::vector<std::string> relations,
     std::vector<Triple> triples);

  std::size_t num_entities() const noexcept { return entities_.size(); }
  std::size_t num_relations() const noexcept { return relations_.size(); }
  std::size_t num_items() const noexcept { return items_.size(); }

  const std::vector<Entity>& entities() const noexcept { return entities_; }
  const Entity& entity(EntityId id) const { return entities_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& relations() const noexcept { return relations_; }
  const std::vector<Triple>& triples() const noexcept { return triples_; }
  /// Item-flagged entity ids in ascending order.
  const std::vector<EntityId>& items() const noexcept { return items_; }

  bool is_item(EntityId id) const { return entity(id).is_item; }
  bool contains(EntityId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < entities_.size();
  }
  std::optional<EntityId> find_uri(std::string_view uri) const;

 private:
  std::vector<Entity> entities_;
  std::vector<std::string> relations_;
  std::vector<Triple> triples_;
  std::vector<EntityId> items_;
  std::unordered_map<std::string, EntityId> by_uri_;
};

/// Loads `<uri>\t<name>\t<0|1>` catalog lines and `<head>\t<relation>\t<tail>`
/// triple lines. Throws LoadError naming the offending line.
Kg load_kg(std::istream& triples, std::istream& catalog);

/// Reads `entities.tsv` and `triples.tsv` from a directory.
Kg load_kg_dir(const std::filesystem::path& dir);
void write_kg_dir(const Kg& kg, const std::filesystem::path& dir);
void write_catalog(const Kg& kg, std::ostream& out);
void write_triples(const Kg& kg, std::ostream& out);

/// Undirected adjacency derived from a Kg.
///
/// relation_neighbors(m, r) is the RGCN neighbor set of m under r, the
/// normalization constant is its size, and neighbors(m) is the union over
/// relations without m itself.
class KgIndex {
 public:
  KgIndex() = default;
  explicit KgIndex(const Kg& kg);

  std::size_t num_entities() const noexcept { return neighbors_.size(); }
  std::size_t num_relations() const noexcept { return by_relation_.size(); }

  /// Sorted ascending, self excluded.
  const std::vector<EntityId>& neighbors(EntityId m) const;
  const std::vector<EntityId>& relation_neighbors(EntityId m, RelationId r) const;
  /// c_{m,r}; zero when m has no neighbors under r.
  double normalization(EntityId m, RelationId r) const;
  double mean_degree() const;

  /// Row m holds 1/c_{m,r} at each neighbor column under relation r.
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& normalized_adjacency(RelationId r) const {
    return adjacency_.at(static_cast<std::size_t>(r));
  }

  friend bool operator==(const KgIndex& a, const KgIndex& b) {
    return a.by_relation_ == b.by_relation_ && a.neighbors_ == b.neighbors_;
  }

 private:
  std::vector<std::vector<std::vector<EntityId>>> by_relation_;  // [r][m]
  std::vector<std::vector<EntityId>> neighbors_;
  std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> adjacency_;
};

/// Uniform draw from neighbors(m); nullopt for an isolated entity.
std::optional<EntityId> sample_neighbor(const KgIndex& index, EntityId m, Rng& rng);

struct EntityMention {
  EntityId entity_id;
  std::size_t utterance_index = 0;
  std::size_t start = 0;  // byte offsets, [start, end)
  std::size_t end = 0;
};

/// Case-insensitive longest-match linker over canonical names.
///
/// Matches must begin and end on word boundaries so that short names do not
/// fire inside longer words. Scanning is greedy left to right.
class EntityLinker {
 public:
  explicit EntityLinker(const Kg& kg);

  std::vector<EntityMention> link(std::string_view text, std::size_t utterance_index = 0) const;

  /// Entities whose lowercased name starts with the lowercased prefix,
  /// ordered by name then id.
  std::vector<EntityId> search_prefix(std::string_view prefix, std::size_t limit) const;

 private:
  struct Node {
    std::vector<std::pair<char, std::int32_t>> children;  // sorted by char
    EntityId entity = -1;
  };
  std::int32_t child(std::int32_t node, char c) const;

  std::vector<Node> trie_;
  std::vector<std::pair<std::string, EntityId>> sorted_names_;
};

std::vector<EntityMention> link_entities(const Kg& kg, std::string_view text);

std::string to_lower_ascii(std::string_view text);

}  // namespace dacrs
