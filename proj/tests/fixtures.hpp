#pragma once

// Shared test fixtures and brute-force oracles. Nothing here calls into the
// search or scoring code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kbqa/kb_store.hpp"
#include "kbqa/numeric.hpp"
#include "kbqa/path_model.hpp"

namespace kbqa::testing {

// {(a,r,b), (a,r,c), (b,s,d), (c,s,d)}
struct ToyKb {
  KnowledgeBase kb;
  EntityId a, b, c, d;
  RelationId r, s;
};

inline ToyKb toy_kb() {
  ToyKb t;
  t.a = t.kb.intern_entity("a");
  t.b = t.kb.intern_entity("b");
  t.c = t.kb.intern_entity("c");
  t.d = t.kb.intern_entity("d");
  t.r = t.kb.intern_relation("r");
  t.s = t.kb.intern_relation("s");
  t.kb.add_fact(t.a, t.r, t.b);
  t.kb.add_fact(t.a, t.r, t.c);
  t.kb.add_fact(t.b, t.s, t.d);
  t.kb.add_fact(t.c, t.s, t.d);
  return t;
}

inline ReasoningPath make_path(std::vector<EntityId> entities, std::vector<RelationId> relations) {
  return ReasoningPath{std::move(entities), std::move(relations)};
}

// Random KB with up to max_entities entities and max_relations relations.
inline KnowledgeBase random_kb(std::uint64_t seed, int max_entities = 50, int max_relations = 6) {
  Rng rng(seed);
  KnowledgeBase kb;
  const int n_ent = rng.between(5, max_entities);
  const int n_rel = rng.between(2, max_relations);
  for (int i = 0; i < n_ent; ++i) kb.intern_entity("e" + std::to_string(i));
  for (int i = 0; i < n_rel; ++i) kb.intern_relation("r" + std::to_string(i));
  const int n_facts = rng.between(n_ent, 3 * n_ent);
  for (int i = 0; i < n_facts; ++i) {
    kb.add_fact(EntityId{static_cast<std::uint32_t>(rng.index(n_ent))},
                RelationId{static_cast<std::uint32_t>(rng.index(n_rel))},
                EntityId{static_cast<std::uint32_t>(rng.index(n_ent))});
  }
  return kb;
}

// Every id sequence (e0, r1, e1, ..., r_T) with T <= max_hops, checked
// triple by triple against has_fact; the last relation must reach y.
inline std::vector<ReasoningPath> brute_force_paths(const KnowledgeBase& kb, EntityId e0, EntityId y,
                                                    int max_hops) {
  std::vector<ReasoningPath> out;
  const auto n_ent = static_cast<std::uint32_t>(kb.entity_count());
  const auto n_rel = static_cast<std::uint32_t>(kb.relation_count());
  ReasoningPath cur;
  cur.entities.push_back(e0);
  auto rec = [&](auto&& self, int depth) -> void {
    for (std::uint32_t r = 0; r < n_rel; ++r) {
      cur.relations.push_back(RelationId{r});
      if (kb.has_fact(cur.entities.back(), RelationId{r}, y)) out.push_back(cur);
      if (depth < max_hops) {
        for (std::uint32_t e = 0; e < n_ent; ++e) {
          if (!kb.has_fact(cur.entities.back(), RelationId{r}, EntityId{e})) continue;
          cur.entities.push_back(EntityId{e});
          self(self, depth + 1);
          cur.entities.pop_back();
        }
      }
      cur.relations.pop_back();
    }
  };
  rec(rec, 1);
  std::sort(out.begin(), out.end(), path_less);
  return out;
}

// Number of stopped paths from e0: every walk prefix times every relation out
// of its last entity, counted by has_fact only.
inline std::size_t brute_force_stopped_count(const KnowledgeBase& kb, EntityId e0, int max_hops) {
  const auto n_ent = static_cast<std::uint32_t>(kb.entity_count());
  const auto n_rel = static_cast<std::uint32_t>(kb.relation_count());
  std::size_t count = 0;
  auto rec = [&](auto&& self, EntityId cur, int depth) -> void {
    for (std::uint32_t r = 0; r < n_rel; ++r) {
      bool any = false;
      for (std::uint32_t e = 0; e < n_ent; ++e) {
        if (!kb.has_fact(cur, RelationId{r}, EntityId{e})) continue;
        any = true;
        if (depth < max_hops) self(self, EntityId{e}, depth + 1);
      }
      count += any ? 1 : 0;
    }
  };
  rec(rec, e0, 1);
  return count;
}

inline std::size_t brute_force_fanout(const KnowledgeBase& kb, EntityId h, RelationId r) {
  std::size_t n = 0;
  for (std::uint32_t e = 0; e < kb.entity_count(); ++e) n += kb.has_fact(h, r, EntityId{e}) ? 1 : 0;
  return n;
}

// Plain probability-space sum of p(y|p) p(p|q) over the given paths.
inline double brute_force_answer_log_prob(const ModelParams& params, const KnowledgeBase& kb,
                                          const std::vector<WordId>& question,
                                          const std::vector<ReasoningPath>& paths) {
  double total = 0.0;
  for (const auto& p : paths) {
    const auto lp = path_log_prob(params, kb, question, p);
    double prob = std::exp(lp.stop_term);
    for (double v : lp.relation_terms) prob *= std::exp(v);
    for (std::size_t t = 0; t + 1 < p.hops(); ++t) {
      prob /= static_cast<double>(brute_force_fanout(kb, p.entities[t], p.relations[t]));
    }
    prob /= static_cast<double>(brute_force_fanout(kb, p.entities.back(), p.relations.back()));
    total += prob;
  }
  return std::log(total);
}

inline ModelDims toy_dims(std::size_t width, std::size_t words, std::size_t entities, std::size_t relations) {
  ModelDims d;
  d.word_dim = d.entity_dim = d.relation_dim = d.hidden_dim = width;
  d.word_count = words;
  d.entity_count = entities;
  d.relation_count = relations;
  return d;
}

inline std::vector<WordId> words(std::initializer_list<std::uint32_t> ids) {
  std::vector<WordId> out;
  for (auto i : ids) out.push_back(WordId{i});
  return out;
}

}  // namespace kbqa::testing
