#include "kbqa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "kbqa/errors.hpp"
#include "kbqa/numeric.hpp"

namespace kbqa {

using ordered_json = nlohmann::ordered_json;

LoadReport read_dataset(std::istream& in, const KnowledgeBase& kb, Vocabulary& vocab, bool grow_vocab,
                        const std::string& source) {
  LoadReport report;
  std::string line;
  std::size_t line_no = 0;
  auto problem = [&](const std::string& why) {
    report.problems.push_back(source + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      problem(std::string("malformed JSON: ") + e.what());
      continue;
    }
    if (!j.is_object() || !j.contains("question") || !j["question"].is_string() || !j.contains("topic_entity") ||
        !j["topic_entity"].is_string() || !j.contains("answers") || !j["answers"].is_array()) {
      problem("expected fields question, topic_entity, answers");
      continue;
    }
    QAInstance inst;
    inst.question_id = line_no;
    inst.text = j["question"].get<std::string>();
    if (tokenize(inst.text).empty()) {
      problem("empty question");
      continue;
    }
    const auto topic = kb.find_entity(j["topic_entity"].get<std::string>());
    if (!topic) {
      problem("unknown topic entity '" + j["topic_entity"].get<std::string>() + "'");
      continue;
    }
    inst.topic = *topic;
    bool ok = true;
    for (const auto& a : j["answers"]) {
      const auto id = a.is_string() ? kb.find_entity(a.get<std::string>()) : std::nullopt;
      if (!id) {
        problem("unknown answer " + a.dump());
        ok = false;
        break;
      }
      if (std::find(inst.gold_answers.begin(), inst.gold_answers.end(), *id) == inst.gold_answers.end()) {
        inst.gold_answers.push_back(*id);
      }
    }
    if (!ok) continue;
    if (inst.gold_answers.empty()) {
      problem("empty answer set");
      continue;
    }
    if (j.contains("path") && !j["path"].is_null()) {
      const auto& p = j["path"];
      if (!p.is_array() || p.size() < 2 || p.size() % 2 != 0) {
        problem("path must alternate entity, relation and end with a relation");
        continue;
      }
      ReasoningPath path;
      for (std::size_t i = 0; i < p.size() && ok; ++i) {
        if (!p[i].is_string()) {
          ok = false;
          break;
        }
        const auto name = p[i].get<std::string>();
        if (i % 2 == 0) {
          const auto e = kb.find_entity(name);
          if (e) path.entities.push_back(*e); else ok = false;
        } else {
          const auto r = kb.find_relation(name);
          if (r) path.relations.push_back(*r); else ok = false;
        }
      }
      if (!ok) {
        problem("path names an unknown entity or relation");
        continue;
      }
      try {
        kb.validate_path(path);
      } catch (const std::invalid_argument& e) {
        problem(std::string("invalid path: ") + e.what());
        continue;
      }
      if (path.topic() != inst.topic) {
        problem("path does not start at the topic entity");
        continue;
      }
      inst.annotated_path = std::move(path);
    }
    inst.answers = inst.gold_answers;
    inst.question = vocab.encode(inst.text, grow_vocab);
    report.instances.push_back(std::move(inst));
  }
  return report;
}

LoadReport load_dataset(const std::filesystem::path& file, const KnowledgeBase& kb, Vocabulary& vocab,
                        bool grow_vocab) {
  std::ifstream in(file);
  if (!in) throw FileError("cannot open dataset " + file.string());
  return read_dataset(in, kb, vocab, grow_vocab, file.string());
}

void write_dataset(std::ostream& out, const KnowledgeBase& kb, const std::vector<QAInstance>& instances) {
  std::set<std::size_t> seen;
  for (const auto& inst : instances) {
    if (!seen.insert(inst.question_id).second) continue;
    ordered_json j;
    j["question"] = inst.text;
    j["topic_entity"] = kb.entity_name(inst.topic);
    auto answers = ordered_json::array();
    for (auto a : inst.gold_answers) answers.push_back(kb.entity_name(a));
    j["answers"] = std::move(answers);
    if (inst.annotated_path) {
      auto path = ordered_json::array();
      for (std::size_t t = 0; t < inst.annotated_path->hops(); ++t) {
        path.push_back(kb.entity_name(inst.annotated_path->entities[t]));
        path.push_back(kb.relation_name(inst.annotated_path->relations[t]));
      }
      j["path"] = std::move(path);
    }
    out << j.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& file, const KnowledgeBase& kb, const std::vector<QAInstance>& instances) {
  std::ofstream out(file);
  if (!out) throw FileError("cannot write dataset " + file.string());
  write_dataset(out, kb, instances);
}

KnowledgeBase load_kb(const std::filesystem::path& file) { return KnowledgeBase::load_tsv(file); }

std::vector<QAInstance> expand_multi_answer(const std::vector<QAInstance>& instances) {
  std::vector<QAInstance> out;
  for (const auto& inst : instances) {
    for (EntityId a : inst.answers) {
      QAInstance copy = inst;
      copy.answers = {a};
      out.push_back(std::move(copy));
    }
  }
  return out;
}

bool has_multiple_paths(const KnowledgeBase& kb, const QAInstance& instance, int max_hops) {
  for (EntityId y : instance.gold_answers) {
    if (enumerate_paths(kb, instance.topic, y, max_hops).size() >= 2) return true;
  }
  return false;
}

double count_multipath_fraction(const std::vector<QAInstance>& instances, const KnowledgeBase& kb, int max_hops) {
  if (instances.empty()) return 0.0;
  std::size_t multi = 0;
  for (const auto& inst : instances) multi += has_multiple_paths(kb, inst, max_hops) ? 1 : 0;
  return static_cast<double>(multi) / static_cast<double>(instances.size());
}

Vocabulary build_vocabulary(std::span<const QAInstance> instances, std::size_t min_count) {
  std::vector<std::string> texts;
  for (const auto& inst : instances) texts.push_back(inst.text);
  return build_vocabulary(texts, min_count);
}

void encode_questions(std::vector<QAInstance>& instances, Vocabulary& vocab, bool grow) {
  for (auto& inst : instances) inst.question = vocab.encode(inst.text, grow);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("synthetic spec: " + why); };
  if (entity_count <= 0 || relation_count <= 0 || type_count <= 0) fail("counts must be positive");
  if (relation_count < type_count) fail("every entity type needs an outgoing relation (relation_count >= type_count)");
  if (entity_count < 2 * type_count) fail("need at least two entities per type");
  if (min_branching < 1 || max_branching < min_branching) fail("branching range must satisfy 1 <= min <= max");
  if (multi_tail_prob < 0 || multi_tail_prob > 1) fail("multi_tail_prob must lie in [0, 1]");
  if (multipath_rate < 0 || multipath_rate > 1) fail("multipath_rate must lie in [0, 1]");
  double mix = 0.0;
  for (double f : hop_mix) {
    if (f < 0) fail("hop fractions must be non-negative");
    mix += f;
  }
  if (std::abs(mix - 1.0) > 1e-9) fail("hop fractions must sum to 1");
  if (synonyms_per_relation < 1) fail("synonyms_per_relation must be positive");
  if (max_answers < 1) fail("max_answers must be positive");
  if (max_alternative_routes < 1) fail("max_alternative_routes must be positive");
  if (train_size <= 0 || dev_size < 0 || test_size < 0) fail("split sizes must be non-negative, train positive");
  for (int h = 1; h <= 3; ++h) {
    if (hop_mix[h - 1] > 0 && h > max_hops) fail("max_hops is below a requested hop count");
  }
}

namespace {

const char* const kTypeNames[] = {"person", "city", "country", "company", "film",
                                  "team",   "school", "band",  "river",   "book"};

std::string type_name(int t) {
  std::string name = kTypeNames[t % 10];
  if (t >= 10) name += std::to_string(t / 10);
  return name;
}

// Split total into parts proportional to weights (largest remainder).
std::vector<int> apportion(int total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> out(weights.size(), 0);
  if (sum <= 0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / sum;
    out[i] = static_cast<int>(std::floor(exact));
    assigned += out[i];
    rem.emplace_back(-(exact - out[i]), i);
  }
  std::sort(rem.begin(), rem.end());
  for (int k = 0; k < total - assigned; ++k) ++out[rem[static_cast<std::size_t>(k) % rem.size()].second];
  return out;
}

struct RelationInfo {
  RelationId id;
  int domain = 0;
  int range = 0;
  std::vector<std::string> synonyms;
};

struct Draft {
  EntityId topic;
  std::vector<RelationId> chain;
  ReasoningPath walk;
  std::vector<EntityId> answers;
  bool multipath = false;
  std::string text;
};

class Generator {
 public:
  explicit Generator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {}

  SyntheticCorpus run() {
    build_kb();
    draft_questions();
    return split();
  }

 private:
  std::string fresh_word() {
    static const std::string consonants = "bdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    for (;;) {
      std::string w;
      const int syllables = 2 + static_cast<int>(rng_.index(2));
      for (int s = 0; s < syllables; ++s) {
        w.push_back(consonants[rng_.index(consonants.size())]);
        w.push_back(vowels[rng_.index(vowels.size())]);
      }
      if (used_words_.insert(w).second) return w;
    }
  }

  EntityId add_entity(int type) {
    const auto id = corpus_.kb.intern_entity(type_name(type) + "_" + std::to_string(entity_type_.size()));
    entity_type_.push_back(type);
    by_type_[static_cast<std::size_t>(type)].push_back(id);
    return id;
  }

  void build_kb() {
    auto& kb = corpus_.kb;
    const int T = spec_.type_count;
    by_type_.assign(static_cast<std::size_t>(T), {});
    for (const char* w : {"what", "is", "the", "of", "tell", "me", "which", "s"}) used_words_.insert(w);

    out_by_domain_.assign(static_cast<std::size_t>(T), {});
    for (int j = 0; j < spec_.relation_count; ++j) {
      RelationInfo info;
      info.domain = j < T ? j : static_cast<int>(rng_.index(static_cast<std::size_t>(T)));
      info.range = static_cast<int>(rng_.index(static_cast<std::size_t>(T)));
      for (int s = 0; s < spec_.synonyms_per_relation; ++s) info.synonyms.push_back(fresh_word());
      info.id = kb.intern_relation(type_name(info.domain) + "." + info.synonyms.front());
      out_by_domain_[static_cast<std::size_t>(info.domain)].push_back(info.id);
      relations_.push_back(std::move(info));
    }

    for (int i = 0; i < spec_.entity_count; ++i) add_entity(i % T);

    for (int i = 0; i < spec_.entity_count; ++i) {
      const EntityId e{static_cast<std::uint32_t>(i)};
      auto options = out_by_domain_[static_cast<std::size_t>(entity_type_[e.value])];
      rng_.shuffle(options);
      const int degree = std::min(rng_.between(spec_.min_branching, spec_.max_branching), static_cast<int>(options.size()));
      for (int k = 0; k < degree; ++k) {
        const RelationId r = options[static_cast<std::size_t>(k)];
        const auto& targets = by_type_[static_cast<std::size_t>(relations_[r.value].range)];
        const int tails = rng_.bernoulli(spec_.multi_tail_prob) ? 2 : 1;
        for (int n = 0; n < tails; ++n) {
          EntityId t = targets[rng_.index(targets.size())];
          if (t == e) t = targets[rng_.index(targets.size())];
          kb.add_fact(e, r, t);
        }
      }
    }
  }

  std::vector<EntityId> traverse(EntityId e0, const std::vector<RelationId>& chain) const {
    std::vector<EntityId> frontier{e0};
    for (RelationId r : chain) {
      std::set<EntityId> next;
      for (EntityId e : frontier) {
        for (EntityId t : corpus_.kb.lookup_tails(e, r)) next.insert(t);
      }
      frontier.assign(next.begin(), next.end());
    }
    return frontier;
  }

  std::optional<Draft> draw(int hops) {
    const auto& kb = corpus_.kb;
    Draft d;
    d.topic = EntityId{static_cast<std::uint32_t>(rng_.index(kb.entity_count()))};
    EntityId cur = d.topic;
    for (int h = 0; h < hops; ++h) {
      const auto rels = kb.outgoing_relations(cur);
      if (rels.empty()) return std::nullopt;
      const RelationId r = rels[rng_.index(rels.size())];
      const auto tails = kb.lookup_tails(cur, r);
      d.walk.entities.push_back(cur);
      d.walk.relations.push_back(r);
      d.chain.push_back(r);
      cur = tails[rng_.index(tails.size())];
    }
    if (used_chains_.contains({d.topic.value, chain_key(d.chain)})) return std::nullopt;
    d.answers = traverse(d.topic, d.chain);
    if (static_cast<int>(d.answers.size()) > spec_.max_answers) return std::nullopt;
    return d;
  }

  static std::vector<std::uint32_t> chain_key(const std::vector<RelationId>& chain) {
    std::vector<std::uint32_t> key;
    for (auto r : chain) key.push_back(r.value);
    return key;
  }

  // 0: single path to every answer, 1: several paths to some answer.
  bool is_multipath(const Draft& d) const {
    for (EntityId y : d.answers) {
      if (enumerate_paths(corpus_.kb, d.topic, y, spec_.max_hops).size() >= 2) return true;
    }
    return false;
  }

  // Adds another route e0 -> y: one new fact through a relation the topic
  // lacks, or two facts through a fresh bridge entity. The change is undone
  // if it alters the answers of this draft or of any accepted question.
  bool inject_alternative(const Draft& d) {
    auto& kb = corpus_.kb;
    const EntityId y = final_target(d);
    const int t0 = entity_type_[d.topic.value];
    const int ty = entity_type_[y.value];
    const auto existing = kb.outgoing_relations(d.topic);
    auto unused = [&](RelationId r) { return std::find(existing.begin(), existing.end(), r) == existing.end(); };

    std::vector<std::pair<RelationId, std::optional<RelationId>>> options;
    for (RelationId rx : out_by_domain_[static_cast<std::size_t>(t0)]) {
      const auto& info = relations_[rx.value];
      if (info.range == ty && unused(rx) && d.chain != std::vector<RelationId>{rx}) options.emplace_back(rx, std::nullopt);
      if (spec_.max_hops < 2) continue;
      for (RelationId ry : out_by_domain_[static_cast<std::size_t>(info.range)]) {
        if (relations_[ry.value].range == ty && d.chain != std::vector<RelationId>{rx, ry}) options.emplace_back(rx, ry);
      }
    }
    if (options.empty()) return false;
    const auto& [rx, ry] = options[rng_.index(options.size())];

    const KnowledgeBase saved = kb;
    int bridge_type = -1;
    if (!ry) {
      kb.add_fact(d.topic, rx, y);
    } else {
      bridge_type = relations_[rx.value].range;
      const EntityId bridge = add_entity(bridge_type);
      kb.add_fact(d.topic, rx, bridge);
      kb.add_fact(bridge, *ry, y);
    }
    bool intact = traverse(d.topic, d.chain) == d.answers;
    for (const auto& q : multi_) {
      if (!intact) break;
      intact = traverse(q.topic, q.chain) == q.answers;
    }
    if (intact) return true;
    kb = saved;
    if (bridge_type >= 0) {
      entity_type_.pop_back();
      by_type_[static_cast<std::size_t>(bridge_type)].pop_back();
    }
    return false;
  }

  EntityId final_target(const Draft& d) const {
    const auto tails = corpus_.kb.lookup_tails(d.walk.entities.back(), d.walk.relations.back());
    return tails.front();
  }

  std::string render(const Draft& d) {
    std::vector<std::string> phrases;
    for (RelationId r : d.chain) {
      const auto& syn = relations_[r.value].synonyms;
      phrases.push_back(syn[rng_.index(syn.size())]);
    }
    const std::string& topic = corpus_.kb.entity_name(d.topic);
    std::ostringstream os;
    switch (rng_.index(3)) {
      case 0:
        os << "what is the";
        for (std::size_t i = phrases.size(); i-- > 0;) os << ' ' << phrases[i] << (i > 0 ? " of the" : " of");
        os << ' ' << topic;
        break;
      case 1:
        os << topic;
        for (const auto& p : phrases) os << ' ' << p;
        os << " is what";
        break;
      default:
        os << "tell me the";
        for (const auto& p : phrases) os << ' ' << p;
        os << " of " << topic;
        break;
    }
    return os.str();
  }

  bool accept(Draft d, bool want_multipath) {
    for (int tries = 0; tries < 4; ++tries) {
      d.text = render(d);
      if (used_texts_.insert(d.text).second) {
        used_chains_.insert({d.topic.value, chain_key(d.chain)});
        d.multipath = want_multipath;
        (want_multipath ? multi_ : single_).push_back(std::move(d));
        return true;
      }
    }
    return false;
  }

  void draft_questions() {
    const int total = spec_.train_size + spec_.dev_size + spec_.test_size;
    const auto per_hop = apportion(total, {spec_.hop_mix[0], spec_.hop_mix[1], spec_.hop_mix[2]});
    std::vector<int> multi_per_hop(3), single_per_hop(3);
    for (int h = 0; h < 3; ++h) {
      multi_per_hop[static_cast<std::size_t>(h)] =
          static_cast<int>(std::lround(spec_.multipath_rate * per_hop[static_cast<std::size_t>(h)]));
      single_per_hop[static_cast<std::size_t>(h)] =
          per_hop[static_cast<std::size_t>(h)] - multi_per_hop[static_cast<std::size_t>(h)];
    }

    // Multipath questions first: injections only add facts, so single-path
    // questions drawn afterwards see the final KB.
    for (int h = 1; h <= 3; ++h) {
      const int need = multi_per_hop[static_cast<std::size_t>(h - 1)];
      int got = 0;
      for (long attempt = 0; got < need; ++attempt) {
        if (attempt > 2000L * (need + 10)) {
          throw std::runtime_error("infeasible synthetic spec: cannot realize " + std::to_string(need) + " multipath " +
                                   std::to_string(h) + "-hop questions");
        }
        auto d = draw(h);
        if (!d) continue;
        if (!is_multipath(*d)) {
          const int routes = rng_.between(1, spec_.max_alternative_routes);
          int added = 0;
          for (int tries = 0; added < routes && tries < 4 * routes; ++tries) added += inject_alternative(*d) ? 1 : 0;
          if (added == 0) continue;
        }
        if (!is_multipath(*d)) continue;
        if (accept(std::move(*d), true)) ++got;
      }
    }
    for (int h = 1; h <= 3; ++h) {
      const int need = single_per_hop[static_cast<std::size_t>(h - 1)];
      int got = 0;
      for (long attempt = 0; got < need; ++attempt) {
        if (attempt > 2000L * (need + 10)) {
          throw std::runtime_error("infeasible synthetic spec: cannot find " + std::to_string(need) + " single-path " +
                                   std::to_string(h) + "-hop questions");
        }
        auto d = draw(h);
        if (!d || is_multipath(*d)) continue;
        if (accept(std::move(*d), false)) ++got;
      }
    }
    for (auto* group : {&multi_, &single_}) {
      for (auto& d : *group) {
        d.answers = traverse(d.topic, d.chain);
        if (is_multipath(d) != d.multipath) throw std::logic_error("synthetic question changed path class");
      }
    }
  }

  QAInstance to_instance(const Draft& d, std::size_t id) const {
    QAInstance inst;
    inst.question_id = id;
    inst.text = d.text;
    inst.topic = d.topic;
    inst.gold_answers = d.answers;
    inst.answers = d.answers;
    inst.annotated_path = d.walk;
    return inst;
  }

  SyntheticCorpus split() {
    rng_.shuffle(multi_);
    rng_.shuffle(single_);
    const std::vector<double> sizes{static_cast<double>(spec_.train_size), static_cast<double>(spec_.dev_size),
                                    static_cast<double>(spec_.test_size)};
    const auto multi_counts = apportion(static_cast<int>(multi_.size()), sizes);
    std::vector<std::vector<QAInstance>*> splits{&corpus_.train, &corpus_.dev, &corpus_.test};
    std::size_t mi = 0, si = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<const Draft*> chosen;
      for (int k = 0; k < multi_counts[s]; ++k) chosen.push_back(&multi_[mi++]);
      const int singles = static_cast<int>(sizes[s]) - multi_counts[s];
      for (int k = 0; k < singles; ++k) chosen.push_back(&single_[si++]);
      rng_.shuffle(chosen);
      for (std::size_t k = 0; k < chosen.size(); ++k) splits[s]->push_back(to_instance(*chosen[k], k + 1));
    }
    return std::move(corpus_);
  }

  const SyntheticSpec& spec_;
  Rng rng_;
  SyntheticCorpus corpus_;
  std::vector<RelationInfo> relations_;
  std::vector<std::vector<RelationId>> out_by_domain_;
  std::vector<int> entity_type_;
  std::vector<std::vector<EntityId>> by_type_;
  std::set<std::string> used_words_;
  std::set<std::string> used_texts_;
  std::set<std::pair<std::uint32_t, std::vector<std::uint32_t>>> used_chains_;
  std::vector<Draft> multi_, single_;
};

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  return Generator(spec).run();
}

std::string spec_to_json(const SyntheticSpec& spec) {
  ordered_json j;
  j["entity_count"] = spec.entity_count;
  j["relation_count"] = spec.relation_count;
  j["type_count"] = spec.type_count;
  j["min_branching"] = spec.min_branching;
  j["max_branching"] = spec.max_branching;
  j["multi_tail_prob"] = spec.multi_tail_prob;
  j["hop_mix"] = spec.hop_mix;
  j["multipath_rate"] = spec.multipath_rate;
  j["max_alternative_routes"] = spec.max_alternative_routes;
  j["synonyms_per_relation"] = spec.synonyms_per_relation;
  j["max_answers"] = spec.max_answers;
  j["train_size"] = spec.train_size;
  j["dev_size"] = spec.dev_size;
  j["test_size"] = spec.test_size;
  j["max_hops"] = spec.max_hops;
  j["seed"] = spec.seed;
  return j.dump(2);
}

void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus, const SyntheticSpec& spec) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "kb.tsv");
    if (!out) throw FileError("cannot write " + (dir / "kb.tsv").string());
    corpus.kb.write_tsv(out);
  }
  save_dataset(dir / "train.jsonl", corpus.kb, corpus.train);
  save_dataset(dir / "dev.jsonl", corpus.kb, corpus.dev);
  save_dataset(dir / "test.jsonl", corpus.kb, corpus.test);
  std::ofstream out(dir / "spec.json");
  if (!out) throw FileError("cannot write " + (dir / "spec.json").string());
  out << spec_to_json(spec) << '\n';
}

}  // namespace kbqa
