#pragma once

// Recurrent path scorer.
//
// At step t the model reads the previous relation through a GRU,
//   h'_t = GRU(h_{t-1}, emb_r(r_{t-1})),
// attends over the question words with a one-hidden-layer scorer,
//   u_tk = v . tanh(A_h h'_t + A_w emb_w(w_k) + b_a),  alpha_t = softmax(u_t),
//   c_t  = sum_k alpha_tk emb_w(w_k),
// mixes in the entity it currently stands on,
//   h_t  = ReLU(F [h'_t; emb_e(e_{t-1}); c_t] + b_F),
// and scores every relation plus <eop> by a dot product with h_t.
//
// A path (e0, r1, e1, ..., e_{T-1}, r_T) is scored by the chain rule over the
// T relation choices, the T-1 uniform entity transitions, and a final <eop>
// step. The <eop> step runs after r_T with a zero entity vector because the
// path does not fix e_T.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kbqa/ids.hpp"
#include "kbqa/kb_store.hpp"
#include "kbqa/tensor.hpp"

namespace kbqa {

struct ModelDims {
  std::size_t word_dim = 32;
  std::size_t entity_dim = 32;
  std::size_t relation_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t word_count = 0;
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;  // KB relations; <eop> and <sop> rows are added on top

  // Throws std::invalid_argument if any size is zero or relation_dim differs
  // from hidden_dim (relation scores are dot products with h_t).
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

struct ModelParams {
  ModelDims dims;

  Matrix word_embedding;      // word_count x word_dim
  Matrix entity_embedding;    // entity_count x entity_dim
  Matrix relation_embedding;  // (relation_count + 2) x relation_dim, rows: relations, <eop>, <sop>

  Matrix gru_update_input, gru_update_hidden, gru_update_bias;
  Matrix gru_reset_input, gru_reset_hidden, gru_reset_bias;
  Matrix gru_cand_input, gru_cand_hidden, gru_cand_bias;

  Matrix att_hidden;  // hidden x hidden
  Matrix att_word;    // hidden x word_dim
  Matrix att_bias;    // 1 x hidden
  Matrix att_out;     // 1 x hidden

  Matrix proj_weight;  // hidden x (hidden + entity_dim + word_dim)
  Matrix proj_bias;    // 1 x hidden

  static ModelParams zeros(const ModelDims& dims);

  std::size_t relation_row(RelationId r) const;
  std::size_t stop_row() const { return dims.relation_count; }
  std::size_t start_row() const { return dims.relation_count + 1; }
  // Size of every relation distribution (KB relations + <eop>).
  std::size_t output_size() const { return dims.relation_count + 1; }

  // Calls f(name, tensor) for every tensor in checkpoint order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const ModelParams&) const = default;

 private:
  template <class Self, class F>
  static void visit_impl(Self& p, F& f) {
    f(std::string_view("word_embedding"), p.word_embedding);
    f(std::string_view("entity_embedding"), p.entity_embedding);
    f(std::string_view("relation_embedding"), p.relation_embedding);
    f(std::string_view("gru_update_input"), p.gru_update_input);
    f(std::string_view("gru_update_hidden"), p.gru_update_hidden);
    f(std::string_view("gru_update_bias"), p.gru_update_bias);
    f(std::string_view("gru_reset_input"), p.gru_reset_input);
    f(std::string_view("gru_reset_hidden"), p.gru_reset_hidden);
    f(std::string_view("gru_reset_bias"), p.gru_reset_bias);
    f(std::string_view("gru_cand_input"), p.gru_cand_input);
    f(std::string_view("gru_cand_hidden"), p.gru_cand_hidden);
    f(std::string_view("gru_cand_bias"), p.gru_cand_bias);
    f(std::string_view("att_hidden"), p.att_hidden);
    f(std::string_view("att_word"), p.att_word);
    f(std::string_view("att_bias"), p.att_bias);
    f(std::string_view("att_out"), p.att_out);
    f(std::string_view("proj_weight"), p.proj_weight);
    f(std::string_view("proj_bias"), p.proj_bias);
  }
};

// Every entry uniform in [-0.08, 0.08], drawn in visit order from one seeded stream.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

// target += scale * source, tensor by tensor.
void add_scaled(ModelParams& target, const ModelParams& source, double scale);
double squared_norm(const ModelParams& p);

// Per-question cache: A_w emb_w(w_k) does not depend on the step.
struct QuestionContext {
  std::vector<WordId> words;
  Matrix word_proj;  // |q| x hidden
};

QuestionContext encode_question(const ModelParams& params, std::span<const WordId> words);

// Everything one recurrence step computed, kept for backpropagation and inspection.
struct StepTrace {
  RelationId prev_relation;
  std::optional<EntityId> prev_entity;  // nullopt on the <eop> step

  std::vector<double> h_prev;
  std::vector<double> input;  // emb_r(prev_relation)
  std::vector<double> update_gate, reset_gate, reset_hidden, candidate;
  std::vector<double> h_tmp;  // h'_t

  Matrix att_activation;  // |q| x hidden, tanh layer of the scorer
  std::vector<double> att_scores;
  std::vector<double> att_weights;
  std::vector<double> context;

  std::vector<double> concat;
  std::vector<double> pre_activation;
  std::vector<double> hidden;  // h_t

  std::vector<double> relation_log_probs;  // output_size(); last entry is <eop>
};

StepTrace step(const ModelParams& params, const QuestionContext& question, std::span<const double> h_prev,
               RelationId prev_relation, std::optional<EntityId> prev_entity);

StepTrace step(const ModelParams& params, std::span<const WordId> question, std::span<const double> h_prev,
               RelationId prev_relation, std::optional<EntityId> prev_entity);

struct ForwardTrace {
  std::vector<StepTrace> steps;      // T relation steps followed by the <eop> step
  std::vector<std::size_t> targets;  // chosen output row per step
};

struct PathLogProb {
  double total = 0.0;
  std::vector<double> relation_terms;  // log p(r_t | ...), t = 1..T
  std::vector<double> entity_terms;    // log(1/M_t), t = 1..T-1
  double stop_term = 0.0;              // log p(<eop> | ...)
};

struct ScoredPath {
  PathLogProb log_prob;
  ForwardTrace trace;
};

// 1/M if next is one of the M tails of (prev, r), else 0.
double entity_transition_prob(const KnowledgeBase& kb, EntityId prev, RelationId relation, EntityId next);

ScoredPath score_path(const ModelParams& params, const KnowledgeBase& kb, const QuestionContext& question,
                      const ReasoningPath& path);

PathLogProb path_log_prob(const ModelParams& params, const KnowledgeBase& kb, std::span<const WordId> question,
                          const ReasoningPath& path);

// log sum_p p(y | p) p(p | q) over every path from e0 to y within max_hops,
// with p(y | p) = 1/|final answer set|. -inf when y is unreachable.
double answer_log_prob_exhaustive(const ModelParams& params, const KnowledgeBase& kb,
                                  std::span<const WordId> question, EntityId e0, EntityId y, int max_hops);

// Reverse-mode pass for one scored path: grad += scale * d log p(path|q) / d params.
// Gradients reaching A_w emb_w(w_k) are collected in d_word_proj and flushed
// once per question by backprop_question.
void backprop_path(const ModelParams& params, const QuestionContext& question, const ForwardTrace& trace,
                   double scale, ModelParams& grad, Matrix& d_word_proj);

void backprop_question(const ModelParams& params, const QuestionContext& question, const Matrix& d_word_proj,
                       ModelParams& grad);

// d log p(path|q) / d params for a single path.
ModelParams path_log_prob_gradient(const ModelParams& params, const KnowledgeBase& kb,
                                   std::span<const WordId> question, const ReasoningPath& path);

}  // namespace kbqa
