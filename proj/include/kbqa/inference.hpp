#pragma once

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "kbqa/kb_store.hpp"
#include "kbqa/path_model.hpp"
#include "kbqa/vocab.hpp"

namespace kbqa {

struct BeamPath {
  ReasoningPath path;
  double log_prob = 0.0;
};

// KB-constrained beam search. Hypotheses branch on (relation, tail entity)
// pairs, so every kept prefix is a walk in the KB. Stopped paths compete for
// beam slots with open ones and leave the beam once kept. Results are sorted
// by log-probability, ties by id sequence.
std::vector<BeamPath> beam_search(const ModelParams& params, const KnowledgeBase& kb, const QuestionContext& question,
                                  EntityId e0, int beam_width, int max_hops);
std::vector<BeamPath> beam_search(const ModelParams& params, const KnowledgeBase& kb,
                                  std::span<const WordId> question, EntityId e0, int beam_width, int max_hops);

struct AnswerDistribution {
  std::map<EntityId, double> log_mass;
  std::map<EntityId, std::vector<std::size_t>> paths;  // indices into the search results

  double mass(EntityId y) const;  // 0 when absent
  bool empty() const { return log_mass.empty(); }
};

AnswerDistribution answer_distribution(const KnowledgeBase& kb, std::span<const BeamPath> results);

using RankedAnswers = std::vector<std::pair<EntityId, double>>;

inline constexpr double kPmiFloor = 1e-12;

// Highest score first, ties by smaller id.
RankedAnswers rank_by_mass(const AnswerDistribution& dist);
// score(y) = mass_q(y) / mass_e0(y), with kPmiFloor for answers the e0-only
// question never reaches.
RankedAnswers pmi_rescore(const AnswerDistribution& dist_q, const AnswerDistribution& dist_e0);

struct PredictOptions {
  int beam_width = 10;
  int max_hops = 3;
  bool use_pmi = false;
};

struct Prediction {
  std::optional<EntityId> answer;  // nullopt: no path from the topic entity
  RankedAnswers ranked_answers;
  std::vector<BeamPath> ranked_paths;
};

// Question made of the topic entity's surface tokens, for the PMI denominator.
std::vector<WordId> topic_question(const KnowledgeBase& kb, const Vocabulary& vocab, EntityId e0);

Prediction predict(const ModelParams& params, const KnowledgeBase& kb, const Vocabulary& vocab,
                   std::span<const WordId> question, EntityId e0, const PredictOptions& options);

}  // namespace kbqa
