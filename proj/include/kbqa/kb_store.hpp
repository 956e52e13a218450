#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kbqa/ids.hpp"

namespace kbqa {

struct Fact {
  EntityId head;
  RelationId relation;
  EntityId tail;
  auto operator<=>(const Fact&) const = default;
};

// p = (e_0, r_1, e_1, ..., e_{T-1}, r_T). The path does not name its answer:
// the answer set is the tail set of its final (entity, relation) pair.
struct ReasoningPath {
  std::vector<EntityId> entities;
  std::vector<RelationId> relations;

  std::size_t hops() const { return relations.size(); }
  EntityId topic() const { return entities.front(); }
  bool operator==(const ReasoningPath&) const = default;
};

// Lexicographic order over the interleaved id sequence e0, r1, e1, r2, ...
bool path_less(const ReasoningPath& a, const ReasoningPath& b);

class KnowledgeBase {
 public:
  EntityId intern_entity(std::string_view name);
  RelationId intern_relation(std::string_view name);

  // Adds (h, r, t); duplicates are ignored. Returns true if the fact is new.
  bool add_fact(EntityId head, RelationId relation, EntityId tail);

  std::span<const EntityId> lookup_tails(EntityId head, RelationId relation) const;
  std::vector<RelationId> outgoing_relations(EntityId head) const;
  bool has_fact(EntityId head, RelationId relation, EntityId tail) const;

  std::size_t entity_count() const { return entity_names_.size(); }
  std::size_t relation_count() const { return relation_names_.size(); }
  std::size_t fact_count() const { return facts_.size(); }
  // Facts in insertion order.
  const std::vector<Fact>& facts() const { return facts_; }

  const std::string& entity_name(EntityId id) const;
  const std::string& relation_name(RelationId id) const;
  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  bool valid(EntityId id) const { return id.value < entity_names_.size(); }
  bool valid(RelationId id) const { return id.value < relation_names_.size(); }

  // Throws std::invalid_argument unless every ReasoningPath invariant holds
  // (interior triples are facts, the last hop has tails, hop count >= 1).
  void validate_path(const ReasoningPath& path, std::size_t max_hops = SIZE_MAX) const;

  static KnowledgeBase load_tsv(const std::filesystem::path& file);
  static KnowledgeBase read_tsv(std::istream& in, const std::string& source = "<stream>");
  void write_tsv(std::ostream& out) const;

 private:
  struct Edge {
    RelationId relation;
    std::vector<EntityId> tails;  // sorted, unique
  };
  struct FactHash {
    std::size_t operator()(const Fact& f) const noexcept {
      std::uint64_t key = (static_cast<std::uint64_t>(f.head.value) << 32) ^ f.tail.value;
      key ^= static_cast<std::uint64_t>(f.relation.value) * 0x9E3779B97F4A7C15ull;
      return std::hash<std::uint64_t>{}(key);
    }
  };

  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<Fact> facts_;
  std::unordered_set<Fact, FactHash> fact_set_;
  std::vector<std::vector<Edge>> adjacency_;  // per head, sorted by relation
};

// All paths from e0 with at most max_hops relations whose final tail set
// contains y, in lexicographic id-sequence order. Cycles are allowed.
std::vector<ReasoningPath> enumerate_paths(const KnowledgeBase& kb, EntityId e0, EntityId y, int max_hops);

// Keeps paths whose last-hop fanout is at most k1, preserving order.
std::vector<ReasoningPath> filter_paths_by_fanout(const KnowledgeBase& kb, std::span<const ReasoningPath> paths,
                                                  std::size_t k1);

std::span<const EntityId> final_answer_set(const KnowledgeBase& kb, const ReasoningPath& path);

// "e0 -r1-> e1 -r2-> ?" using surface names.
std::string describe_path(const KnowledgeBase& kb, const ReasoningPath& path);

}  // namespace kbqa
