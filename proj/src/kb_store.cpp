#include "kbqa/kb_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "kbqa/errors.hpp"

namespace kbqa {

bool path_less(const ReasoningPath& a, const ReasoningPath& b) {
  const std::size_t n = std::min(a.relations.size(), b.relations.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.entities[i] != b.entities[i]) return a.entities[i] < b.entities[i];
    if (a.relations[i] != b.relations[i]) return a.relations[i] < b.relations[i];
  }
  return a.relations.size() < b.relations.size();
}

EntityId KnowledgeBase::intern_entity(std::string_view name) {
  if (name.empty()) throw std::invalid_argument("entity name must be non-empty");
  auto it = entity_index_.find(std::string(name));
  if (it != entity_index_.end()) return it->second;
  const EntityId id{static_cast<std::uint32_t>(entity_names_.size())};
  entity_names_.emplace_back(name);
  entity_index_.emplace(entity_names_.back(), id);
  adjacency_.emplace_back();
  return id;
}

RelationId KnowledgeBase::intern_relation(std::string_view name) {
  if (name.empty()) throw std::invalid_argument("relation name must be non-empty");
  auto it = relation_index_.find(std::string(name));
  if (it != relation_index_.end()) return it->second;
  const RelationId id{static_cast<std::uint32_t>(relation_names_.size())};
  if (is_pseudo_relation(id)) throw std::length_error("relation id space exhausted");
  relation_names_.emplace_back(name);
  relation_index_.emplace(relation_names_.back(), id);
  return id;
}

bool KnowledgeBase::add_fact(EntityId head, RelationId relation, EntityId tail) {
  if (is_pseudo_relation(relation)) throw std::invalid_argument("<sop>/<eop> cannot appear in a fact");
  if (!valid(head) || !valid(tail)) throw std::invalid_argument("fact references an unknown entity");
  if (!valid(relation)) throw std::invalid_argument("fact references an unknown relation");

  const Fact fact{head, relation, tail};
  if (!fact_set_.insert(fact).second) return false;
  facts_.push_back(fact);

  auto& edges = adjacency_[head.value];
  auto edge = std::lower_bound(edges.begin(), edges.end(), relation,
                               [](const Edge& e, RelationId r) { return e.relation < r; });
  if (edge == edges.end() || edge->relation != relation) edge = edges.insert(edge, Edge{relation, {}});
  auto& tails = edge->tails;
  tails.insert(std::lower_bound(tails.begin(), tails.end(), tail), tail);
  return true;
}

std::span<const EntityId> KnowledgeBase::lookup_tails(EntityId head, RelationId relation) const {
  if (!valid(head)) return {};
  const auto& edges = adjacency_[head.value];
  auto edge = std::lower_bound(edges.begin(), edges.end(), relation,
                               [](const Edge& e, RelationId r) { return e.relation < r; });
  if (edge == edges.end() || edge->relation != relation) return {};
  return edge->tails;
}

std::vector<RelationId> KnowledgeBase::outgoing_relations(EntityId head) const {
  std::vector<RelationId> out;
  if (!valid(head)) return out;
  out.reserve(adjacency_[head.value].size());
  for (const auto& edge : adjacency_[head.value]) out.push_back(edge.relation);
  return out;
}

bool KnowledgeBase::has_fact(EntityId head, RelationId relation, EntityId tail) const {
  return fact_set_.contains(Fact{head, relation, tail});
}

const std::string& KnowledgeBase::entity_name(EntityId id) const {
  if (!valid(id)) throw std::out_of_range("unknown entity id " + std::to_string(id.value));
  return entity_names_[id.value];
}

const std::string& KnowledgeBase::relation_name(RelationId id) const {
  static const std::string kSop = "<sop>";
  static const std::string kEop = "<eop>";
  if (id == kStartRelation) return kSop;
  if (id == kStopRelation) return kEop;
  if (!valid(id)) throw std::out_of_range("unknown relation id " + std::to_string(id.value));
  return relation_names_[id.value];
}

std::optional<EntityId> KnowledgeBase::find_entity(std::string_view name) const {
  auto it = entity_index_.find(std::string(name));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeBase::find_relation(std::string_view name) const {
  auto it = relation_index_.find(std::string(name));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

void KnowledgeBase::validate_path(const ReasoningPath& path, std::size_t max_hops) const {
  const std::size_t hops = path.relations.size();
  if (hops == 0) throw std::invalid_argument("path has no relations");
  if (hops > max_hops) throw std::invalid_argument("path exceeds the hop limit");
  if (path.entities.size() != hops) throw std::invalid_argument("path must hold one entity per relation");
  for (std::size_t t = 0; t < hops; ++t) {
    if (!valid(path.entities[t])) throw std::invalid_argument("path references an unknown entity");
    if (!valid(path.relations[t])) throw std::invalid_argument("path references an unknown relation");
  }
  for (std::size_t t = 1; t < hops; ++t) {
    if (!has_fact(path.entities[t - 1], path.relations[t - 1], path.entities[t])) {
      throw std::invalid_argument("path step " + std::to_string(t) + " is not a fact: " + describe_path(*this, path));
    }
  }
  if (lookup_tails(path.entities.back(), path.relations.back()).empty()) {
    throw std::invalid_argument("final hop has no tails: " + describe_path(*this, path));
  }
}

KnowledgeBase KnowledgeBase::load_tsv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FileError("cannot open knowledge base " + file.string());
  return read_tsv(in, file.string());
}

KnowledgeBase KnowledgeBase::read_tsv(std::istream& in, const std::string& source) {
  KnowledgeBase kb;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto first = line.find('\t');
    const auto second = first == std::string::npos ? first : line.find('\t', first + 1);
    if (second == std::string::npos || line.find('\t', second + 1) != std::string::npos) {
      throw ParseError(source, line_no, "expected head<TAB>relation<TAB>tail");
    }
    const std::string_view view(line);
    const auto head = view.substr(0, first);
    const auto relation = view.substr(first + 1, second - first - 1);
    const auto tail = view.substr(second + 1);
    if (head.empty() || relation.empty() || tail.empty()) throw ParseError(source, line_no, "empty field");
    if (relation == "<sop>" || relation == "<eop>") throw ParseError(source, line_no, "reserved relation name");
    const EntityId h = kb.intern_entity(head);
    const RelationId r = kb.intern_relation(relation);
    const EntityId t = kb.intern_entity(tail);
    kb.add_fact(h, r, t);
  }
  return kb;
}

void KnowledgeBase::write_tsv(std::ostream& out) const {
  for (const auto& f : facts_) {
    out << entity_names_[f.head.value] << '\t' << relation_names_[f.relation.value] << '\t'
        << entity_names_[f.tail.value] << '\n';
  }
}

namespace {

void dfs(const KnowledgeBase& kb, EntityId target, int max_hops, ReasoningPath& prefix,
         std::vector<ReasoningPath>& out) {
  const EntityId here = prefix.entities.back();
  const int depth = static_cast<int>(prefix.relations.size()) + 1;
  for (RelationId r : kb.outgoing_relations(here)) {
    const auto tails = kb.lookup_tails(here, r);
    prefix.relations.push_back(r);
    // The stopped path sorts before every extension of it.
    if (std::binary_search(tails.begin(), tails.end(), target)) out.push_back(prefix);
    if (depth < max_hops) {
      for (EntityId next : tails) {
        prefix.entities.push_back(next);
        dfs(kb, target, max_hops, prefix, out);
        prefix.entities.pop_back();
      }
    }
    prefix.relations.pop_back();
  }
}

}  // namespace

std::vector<ReasoningPath> enumerate_paths(const KnowledgeBase& kb, EntityId e0, EntityId y, int max_hops) {
  if (max_hops < 1) throw std::invalid_argument("max_hops must be at least 1");
  std::vector<ReasoningPath> out;
  if (!kb.valid(e0) || !kb.valid(y)) return out;
  ReasoningPath prefix;
  prefix.entities.push_back(e0);
  dfs(kb, y, max_hops, prefix, out);
  return out;
}

std::vector<ReasoningPath> filter_paths_by_fanout(const KnowledgeBase& kb, std::span<const ReasoningPath> paths,
                                                  std::size_t k1) {
  if (k1 < 1) throw std::invalid_argument("k1 must be at least 1");
  std::vector<ReasoningPath> kept;
  for (const auto& p : paths) {
    if (final_answer_set(kb, p).size() <= k1) kept.push_back(p);
  }
  return kept;
}

std::span<const EntityId> final_answer_set(const KnowledgeBase& kb, const ReasoningPath& path) {
  return kb.lookup_tails(path.entities.back(), path.relations.back());
}

std::string describe_path(const KnowledgeBase& kb, const ReasoningPath& path) {
  std::ostringstream os;
  for (std::size_t t = 0; t < path.relations.size(); ++t) {
    os << (t < path.entities.size() && kb.valid(path.entities[t]) ? kb.entity_name(path.entities[t]) : "?") << " -"
       << (kb.valid(path.relations[t]) ? kb.relation_name(path.relations[t]) : "?") << "-> ";
  }
  os << '?';
  return os.str();
}

}  // namespace kbqa
