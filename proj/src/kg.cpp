#include "dacrs/kg.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "dacrs/errors.hpp"

namespace dacrs {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || u >= 0x80;
}

}  // namespace

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Kg::Kg(std::vector<Entity> entities, std::vector<std::string> relations,
       std::vector<Triple> triples)
    : entities_(std::move(entities)), relations_(std::move(relations)) {
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    const auto id = static_cast<EntityId>(i);
    if (!by_uri_.emplace(entities_[i].uri, id).second) {
      throw LoadError("duplicate entity uri: " + entities_[i].uri);
    }
    if (entities_[i].is_item) items_.push_back(id);
  }
  std::set<std::tuple<EntityId, RelationId, EntityId>> seen;
  triples_.reserve(triples.size());
  for (const auto& t : triples) {
    if (!contains(t.head) || !contains(t.tail) || t.relation < 0 ||
        static_cast<std::size_t>(t.relation) >= relations_.size()) {
      throw LoadError("triple references an unknown entity or relation");
    }
    if (seen.emplace(t.head, t.relation, t.tail).second) triples_.push_back(t);
  }
}

std::optional<EntityId> Kg::find_uri(std::string_view uri) const {
  const auto it = by_uri_.find(std::string(uri));
  if (it == by_uri_.end()) return std::nullopt;
  return it->second;
}

Kg load_kg(std::istream& triples, std::istream& catalog) {
  std::vector<Entity> entities;
  std::unordered_map<std::string, EntityId> by_uri;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(catalog, line)) {
    ++line_no;
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    const auto fields = split_tabs(text);
    if (fields.size() != 3 || fields[0].empty() || (fields[2] != "0" && fields[2] != "1")) {
      throw LoadError("entity catalog line " + std::to_string(line_no) +
                      ": expected <uri>\\t<name>\\t<0|1>");
    }
    const auto id = static_cast<EntityId>(entities.size());
    if (!by_uri.emplace(std::string(fields[0]), id).second) {
      throw LoadError("entity catalog line " + std::to_string(line_no) + ": duplicate uri " +
                      std::string(fields[0]));
    }
    entities.push_back({std::string(fields[0]), std::string(fields[1]), fields[2] == "1"});
  }

  std::vector<std::string> relations;
  std::unordered_map<std::string, RelationId> relation_ids;
  std::vector<Triple> parsed;
  line_no = 0;
  while (std::getline(triples, line)) {
    ++line_no;
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    const auto fields = split_tabs(text);
    if (fields.size() != 3 || fields[1].empty()) {
      throw LoadError("triples line " + std::to_string(line_no) +
                      ": expected <head>\\t<relation>\\t<tail>");
    }
    const auto head = by_uri.find(std::string(fields[0]));
    const auto tail = by_uri.find(std::string(fields[2]));
    if (head == by_uri.end() || tail == by_uri.end()) {
      throw LoadError("triples line " + std::to_string(line_no) + ": unknown entity " +
                      std::string(head == by_uri.end() ? fields[0] : fields[2]));
    }
    auto [rel, inserted] =
        relation_ids.emplace(std::string(fields[1]), static_cast<RelationId>(relations.size()));
    if (inserted) relations.emplace_back(fields[1]);
    parsed.push_back({head->second, rel->second, tail->second});
  }
  return Kg(std::move(entities), std::move(relations), std::move(parsed));
}

Kg load_kg_dir(const std::filesystem::path& dir) {
  std::ifstream catalog(dir / "entities.tsv");
  if (!catalog) throw LoadError("cannot open " + (dir / "entities.tsv").string());
  std::ifstream triples(dir / "triples.tsv");
  if (!triples) throw LoadError("cannot open " + (dir / "triples.tsv").string());
  return load_kg(triples, catalog);
}

void write_catalog(const Kg& kg, std::ostream& out) {
  for (const auto& e : kg.entities()) {
    out << e.uri << '\t' << e.name << '\t' << (e.is_item ? '1' : '0') << '\n';
  }
}

void write_triples(const Kg& kg, std::ostream& out) {
  for (const auto& t : kg.triples()) {
    out << kg.entity(t.head).uri << '\t' << kg.relations()[static_cast<std::size_t>(t.relation)]
        << '\t' << kg.entity(t.tail).uri << '\n';
  }
}

void write_kg_dir(const Kg& kg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream catalog(dir / "entities.tsv");
  std::ofstream triples(dir / "triples.tsv");
  if (!catalog || !triples) throw LoadError("cannot write KG files under " + dir.string());
  write_catalog(kg, catalog);
  write_triples(kg, triples);
}

KgIndex::KgIndex(const Kg& kg) {
  const auto n = kg.num_entities();
  by_relation_.assign(kg.num_relations(), std::vector<std::vector<EntityId>>(n));
  neighbors_.assign(n, {});
  for (const auto& t : kg.triples()) {
    if (t.head == t.tail) continue;
    auto& rel = by_relation_[static_cast<std::size_t>(t.relation)];
    rel[static_cast<std::size_t>(t.head)].push_back(t.tail);
    rel[static_cast<std::size_t>(t.tail)].push_back(t.head);
    neighbors_[static_cast<std::size_t>(t.head)].push_back(t.tail);
    neighbors_[static_cast<std::size_t>(t.tail)].push_back(t.head);
  }
  const auto sort_unique = [](std::vector<EntityId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  for (auto& rel : by_relation_)
    for (auto& list : rel) sort_unique(list);
  for (auto& list : neighbors_) sort_unique(list);

  adjacency_.reserve(by_relation_.size());
  for (const auto& rel : by_relation_) {
    std::vector<Eigen::Triplet<double>> entries;
    for (std::size_t m = 0; m < n; ++m) {
      const double inv = rel[m].empty() ? 0.0 : 1.0 / static_cast<double>(rel[m].size());
      for (const auto j : rel[m]) entries.emplace_back(static_cast<int>(m), j, inv);
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> a(static_cast<Eigen::Index>(n),
                                                   static_cast<Eigen::Index>(n));
    a.setFromTriplets(entries.begin(), entries.end());
    adjacency_.push_back(std::move(a));
  }
}

const std::vector<EntityId>& KgIndex::neighbors(EntityId m) const {
  if (m < 0 || static_cast<std::size_t>(m) >= neighbors_.size()) {
    throw ArgumentError("unknown entity id " + std::to_string(m));
  }
  return neighbors_[static_cast<std::size_t>(m)];
}

const std::vector<EntityId>& KgIndex::relation_neighbors(EntityId m, RelationId r) const {
  return by_relation_.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(m));
}

double KgIndex::normalization(EntityId m, RelationId r) const {
  return static_cast<double>(relation_neighbors(m, r).size());
}

double KgIndex::mean_degree() const {
  if (neighbors_.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto& list : neighbors_) total += list.size();
  return static_cast<double>(total) / static_cast<double>(neighbors_.size());
}

std::optional<EntityId> sample_neighbor(const KgIndex& index, EntityId m, Rng& rng) {
  const auto& list = index.neighbors(m);
  if (list.empty()) return std::nullopt;
  return list[rng.uniform_index(list.size())];
}

EntityLinker::EntityLinker(const Kg& kg) : trie_(1) {
  for (std::size_t i = 0; i < kg.num_entities(); ++i) {
    const auto id = static_cast<EntityId>(i);
    auto key = to_lower_ascii(kg.entity(id).name);
    if (key.empty()) continue;
    std::int32_t node = 0;
    for (const char c : key) {
      auto next = child(node, c);
      if (next < 0) {
        next = static_cast<std::int32_t>(trie_.size());
        trie_.emplace_back();
        auto& kids = trie_[static_cast<std::size_t>(node)].children;
        kids.insert(std::lower_bound(kids.begin(), kids.end(), std::make_pair(c, std::int32_t{0})),
                    {c, next});
      }
      node = next;
    }
    // First catalog entry wins for duplicate names.
    if (trie_[static_cast<std::size_t>(node)].entity < 0) trie_[static_cast<std::size_t>(node)].entity = id;
    sorted_names_.emplace_back(std::move(key), id);
  }
  std::sort(sorted_names_.begin(), sorted_names_.end());
}

std::int32_t EntityLinker::child(std::int32_t node, char c) const {
  const auto& kids = trie_[static_cast<std::size_t>(node)].children;
  const auto it = std::lower_bound(kids.begin(), kids.end(), std::make_pair(c, std::int32_t{0}),
                                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return (it != kids.end() && it->first == c) ? it->second : -1;
}

std::vector<EntityMention> EntityLinker::link(std::string_view text,
                                              std::size_t utterance_index) const {
  std::vector<EntityMention> mentions;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (pos > 0 && is_word_char(text[pos - 1]) && is_word_char(text[pos])) {
      ++pos;
      continue;
    }
    std::int32_t node = 0;
    EntityId best = -1;
    std::size_t best_end = pos;
    for (std::size_t i = pos; i < text.size(); ++i) {
      node = child(node, static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
      if (node < 0) break;
      const auto entity = trie_[static_cast<std::size_t>(node)].entity;
      const bool boundary = i + 1 == text.size() || !is_word_char(text[i]) ||
                            !is_word_char(text[i + 1]);
      if (entity >= 0 && boundary) {
        best = entity;
        best_end = i + 1;
      }
    }
    if (best >= 0) {
      mentions.push_back({best, utterance_index, pos, best_end});
      pos = best_end;
    } else {
      ++pos;
    }
  }
  return mentions;
}

std::vector<EntityId> EntityLinker::search_prefix(std::string_view prefix,
                                                  std::size_t limit) const {
  const auto key = to_lower_ascii(prefix);
  std::vector<EntityId> out;
  auto it = std::lower_bound(sorted_names_.begin(), sorted_names_.end(),
                             std::make_pair(key, EntityId{-1}));
  for (; it != sorted_names_.end() && out.size() < limit; ++it) {
    if (it->first.compare(0, key.size(), key) != 0) break;
    out.push_back(it->second);
  }
  return out;
}

std::vector<EntityMention> link_entities(const Kg& kg, std::string_view text) {
  return EntityLinker(kg).link(text);
}

}  // namespace dacrs
