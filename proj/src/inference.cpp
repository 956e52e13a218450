#include "kbqa/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kbqa/numeric.hpp"

namespace kbqa {

namespace {

struct Hypothesis {
  ReasoningPath path;  // open: entities has one more element than relations
  std::vector<double> hidden;
  double score = 0.0;
  bool finished = false;
};

std::vector<std::uint32_t> id_sequence(const ReasoningPath& p) {
  std::vector<std::uint32_t> seq;
  for (std::size_t i = 0; i < p.entities.size(); ++i) {
    seq.push_back(p.entities[i].value);
    if (i < p.relations.size()) seq.push_back(p.relations[i].value);
  }
  return seq;
}

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return id_sequence(a.path) < id_sequence(b.path);
}

}  // namespace

std::vector<BeamPath> beam_search(const ModelParams& params, const KnowledgeBase& kb, const QuestionContext& question,
                                  EntityId e0, int beam_width, int max_hops) {
  if (beam_width < 1) throw std::invalid_argument("beam_width must be at least 1");
  if (max_hops < 1) throw std::invalid_argument("max_hops must be at least 1");
  if (!kb.valid(e0)) throw std::invalid_argument("unknown topic entity");

  std::vector<BeamPath> results;
  std::vector<Hypothesis> beam(1);
  beam[0].path.entities = {e0};
  beam[0].hidden.assign(params.dims.hidden_dim, 0.0);

  for (int depth = 1; depth <= max_hops && !beam.empty(); ++depth) {
    std::vector<Hypothesis> pool;
    for (const auto& hyp : beam) {
      const EntityId cur = hyp.path.entities.back();
      const RelationId prev = hyp.path.relations.empty() ? kStartRelation : hyp.path.relations.back();
      const auto st = step(params, question, hyp.hidden, prev, cur);
      ReasoningPath prefix = hyp.path;
      for (RelationId r : kb.outgoing_relations(cur)) {
        const double lp_r = st.relation_log_probs[params.relation_row(r)];
        prefix.relations.push_back(r);

        const auto stop = step(params, question, st.hidden, r, std::nullopt);
        Hypothesis done{prefix, {}, hyp.score + lp_r + stop.relation_log_probs[params.stop_row()], true};
        pool.push_back(std::move(done));

        if (depth < max_hops) {
          const auto tails = kb.lookup_tails(cur, r);
          const double lp_e = -std::log(static_cast<double>(tails.size()));
          for (EntityId t : tails) {
            if (kb.outgoing_relations(t).empty()) continue;  // cannot reach a stopped path
            Hypothesis open{prefix, st.hidden, hyp.score + lp_r + lp_e, false};
            open.path.entities.push_back(t);
            pool.push_back(std::move(open));
          }
        }
        prefix.relations.pop_back();
      }
    }
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > static_cast<std::size_t>(beam_width)) pool.resize(static_cast<std::size_t>(beam_width));
    beam.clear();
    for (auto& h : pool) {
      if (h.finished) {
        results.push_back({std::move(h.path), h.score});
      } else {
        beam.push_back(std::move(h));
      }
    }
  }
  std::sort(results.begin(), results.end(), [](const BeamPath& a, const BeamPath& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return path_less(a.path, b.path);
  });
  return results;
}

std::vector<BeamPath> beam_search(const ModelParams& params, const KnowledgeBase& kb,
                                  std::span<const WordId> question, EntityId e0, int beam_width, int max_hops) {
  return beam_search(params, kb, encode_question(params, question), e0, beam_width, max_hops);
}

double AnswerDistribution::mass(EntityId y) const {
  auto it = log_mass.find(y);
  return it == log_mass.end() ? 0.0 : std::exp(it->second);
}

AnswerDistribution answer_distribution(const KnowledgeBase& kb, std::span<const BeamPath> results) {
  AnswerDistribution dist;
  std::map<EntityId, std::vector<double>> terms;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto tails = final_answer_set(kb, results[i].path);
    const double share = results[i].log_prob - std::log(static_cast<double>(tails.size()));
    for (EntityId y : tails) {
      terms[y].push_back(share);
      dist.paths[y].push_back(i);
    }
  }
  for (auto& [y, t] : terms) dist.log_mass[y] = log_sum_exp(t);
  return dist;
}

namespace {

void sort_ranked(RankedAnswers& ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
}

}  // namespace

RankedAnswers rank_by_mass(const AnswerDistribution& dist) {
  RankedAnswers ranked;
  for (const auto& [y, lm] : dist.log_mass) ranked.emplace_back(y, std::exp(lm));
  sort_ranked(ranked);
  return ranked;
}

RankedAnswers pmi_rescore(const AnswerDistribution& dist_q, const AnswerDistribution& dist_e0) {
  RankedAnswers ranked;
  for (const auto& [y, lm] : dist_q.log_mass) {
    const double denom = dist_e0.log_mass.contains(y) ? std::max(dist_e0.mass(y), kPmiFloor) : kPmiFloor;
    ranked.emplace_back(y, std::exp(lm) / denom);
  }
  sort_ranked(ranked);
  return ranked;
}

std::vector<WordId> topic_question(const KnowledgeBase& kb, const Vocabulary& vocab, EntityId e0) {
  std::vector<WordId> words;
  for (const auto& tok : tokenize(kb.entity_name(e0))) words.push_back(vocab.lookup(tok));
  return words;
}

Prediction predict(const ModelParams& params, const KnowledgeBase& kb, const Vocabulary& vocab,
                   std::span<const WordId> question, EntityId e0, const PredictOptions& options) {
  Prediction out;
  out.ranked_paths = beam_search(params, kb, question, e0, options.beam_width, options.max_hops);
  if (out.ranked_paths.empty()) return out;
  const auto dist = answer_distribution(kb, out.ranked_paths);
  if (options.use_pmi) {
    const auto base = beam_search(params, kb, topic_question(kb, vocab, e0), e0, options.beam_width, options.max_hops);
    out.ranked_answers = pmi_rescore(dist, answer_distribution(kb, base));
  } else {
    out.ranked_answers = rank_by_mass(dist);
  }
  if (!out.ranked_answers.empty()) out.answer = out.ranked_answers.front().first;
  return out;
}

}  // namespace kbqa
