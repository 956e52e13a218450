#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kbqa/kb_store.hpp"
#include "kbqa/vocab.hpp"

namespace kbqa {

struct QAInstance {
  std::size_t question_id = 0;  // position in the source file; shared by expanded copies
  std::string text;
  std::vector<WordId> question;
  EntityId topic;
  std::vector<EntityId> answers;       // training targets; a singleton after expansion
  std::vector<EntityId> gold_answers;  // the full original answer set
  std::optional<ReasoningPath> annotated_path;
};

struct LoadReport {
  std::vector<QAInstance> instances;
  std::vector<std::string> problems;  // "file:line: reason" for every skipped line
};

// JSON lines: {"question", "topic_entity", "answers": [..], "path": [e0, r1, e1, ..., rT]?}.
// Words are encoded with vocab (grown when grow_vocab is set). Lines that fail
// to parse or resolve against the KB are skipped and reported.
LoadReport read_dataset(std::istream& in, const KnowledgeBase& kb, Vocabulary& vocab, bool grow_vocab,
                        const std::string& source = "<stream>");
LoadReport load_dataset(const std::filesystem::path& file, const KnowledgeBase& kb, Vocabulary& vocab,
                        bool grow_vocab);

// Writes one line per distinct question_id using the full gold set.
void write_dataset(std::ostream& out, const KnowledgeBase& kb, const std::vector<QAInstance>& instances);
void save_dataset(const std::filesystem::path& file, const KnowledgeBase& kb, const std::vector<QAInstance>& instances);

KnowledgeBase load_kb(const std::filesystem::path& file);

// One instance per gold answer; each copy keeps the full gold set.
std::vector<QAInstance> expand_multi_answer(const std::vector<QAInstance>& instances);

// True if some gold answer is reachable by at least two distinct paths.
bool has_multiple_paths(const KnowledgeBase& kb, const QAInstance& instance, int max_hops);
double count_multipath_fraction(const std::vector<QAInstance>& instances, const KnowledgeBase& kb, int max_hops);

struct SyntheticSpec {
  int entity_count = 300;
  int relation_count = 12;
  int type_count = 5;
  int min_branching = 2;  // outgoing relations per entity
  int max_branching = 4;
  double multi_tail_prob = 0.05;             // chance an (entity, relation) pair gets two tails
  std::array<double, 3> hop_mix{0.0, 1.0, 0.0};  // fractions of 1-, 2-, 3-hop questions
  double multipath_rate = 0.15;
  // A multipath question without a natural second path gets between 1 and
  // this many injected alternative routes to its answer.
  int max_alternative_routes = 3;
  int synonyms_per_relation = 2;
  int max_answers = 4;
  int train_size = 200;
  int dev_size = 50;
  int test_size = 50;
  int max_hops = 3;  // search horizon used to count paths
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
};

struct SyntheticCorpus {
  KnowledgeBase kb;
  std::vector<QAInstance> train, dev, test;  // words not encoded; question ids are per split
};

// Throws std::runtime_error when the spec cannot be realized.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// Vocabulary over the question texts (see build_vocabulary in vocab.hpp).
Vocabulary build_vocabulary(std::span<const QAInstance> instances, std::size_t min_count);

// Fills QAInstance::question from text.
void encode_questions(std::vector<QAInstance>& instances, Vocabulary& vocab, bool grow);

// kb.tsv, train.jsonl, dev.jsonl, test.jsonl, spec.json
void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus, const SyntheticSpec& spec);
std::string spec_to_json(const SyntheticSpec& spec);

}  // namespace kbqa
