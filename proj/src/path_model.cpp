#include "kbqa/path_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kbqa/numeric.hpp"

namespace kbqa {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::span<const double> bias_row(const Matrix& m) { return m.row(0); }

void check_word(const ModelParams& p, WordId w) {
  if (w.value >= p.dims.word_count) throw std::invalid_argument("word id out of range: " + std::to_string(w.value));
}

void check_entity(const ModelParams& p, EntityId e) {
  if (e.value >= p.dims.entity_count) {
    throw std::invalid_argument("entity id out of range: " + std::to_string(e.value));
  }
}

}  // namespace

void ModelDims::validate() const {
  if (word_dim == 0 || entity_dim == 0 || relation_dim == 0 || hidden_dim == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (word_count == 0 || entity_count == 0 || relation_count == 0) {
    throw std::invalid_argument("vocabulary sizes must be positive");
  }
  if (relation_dim != hidden_dim) {
    throw std::invalid_argument("relation_dim must equal hidden_dim (relations are scored by dot product with h_t)");
  }
}

ModelParams ModelParams::zeros(const ModelDims& dims) {
  dims.validate();
  const std::size_t h = dims.hidden_dim;
  const std::size_t r = dims.relation_dim;
  ModelParams p;
  p.dims = dims;
  p.word_embedding = Matrix(dims.word_count, dims.word_dim);
  p.entity_embedding = Matrix(dims.entity_count, dims.entity_dim);
  p.relation_embedding = Matrix(dims.relation_count + 2, r);
  p.gru_update_input = Matrix(h, r);
  p.gru_update_hidden = Matrix(h, h);
  p.gru_update_bias = Matrix(1, h);
  p.gru_reset_input = Matrix(h, r);
  p.gru_reset_hidden = Matrix(h, h);
  p.gru_reset_bias = Matrix(1, h);
  p.gru_cand_input = Matrix(h, r);
  p.gru_cand_hidden = Matrix(h, h);
  p.gru_cand_bias = Matrix(1, h);
  p.att_hidden = Matrix(h, h);
  p.att_word = Matrix(h, dims.word_dim);
  p.att_bias = Matrix(1, h);
  p.att_out = Matrix(1, h);
  p.proj_weight = Matrix(h, h + dims.entity_dim + dims.word_dim);
  p.proj_bias = Matrix(1, h);
  return p;
}

std::size_t ModelParams::relation_row(RelationId r) const {
  if (r == kStopRelation) return stop_row();
  if (r == kStartRelation) return start_row();
  if (r.value >= dims.relation_count) {
    throw std::invalid_argument("relation id out of range: " + std::to_string(r.value));
  }
  return r.value;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](std::string_view, const Matrix& m) { n += m.size(); });
  return n;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  visit([&](std::string_view, const Matrix& m) {
    for (double v : m.values()) ok = ok && std::isfinite(v);
  });
  return ok;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(dims);
  Rng rng(seed);
  p.visit([&](std::string_view, Matrix& m) {
    for (double& v : m.values()) v = rng.uniform(-0.08, 0.08);
  });
  return p;
}

void add_scaled(ModelParams& target, const ModelParams& source, double scale) {
  std::vector<std::span<const double>> src;
  source.visit([&](std::string_view, const Matrix& m) { src.push_back(m.values()); });
  std::size_t i = 0;
  target.visit([&](std::string_view, Matrix& m) {
    auto dst = m.values();
    const auto s = src[i++];
    if (s.size() != dst.size()) throw std::invalid_argument("parameter shapes differ");
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * s[k];
  });
}

double squared_norm(const ModelParams& p) {
  double acc = 0.0;
  p.visit([&](std::string_view, const Matrix& m) {
    for (double v : m.values()) acc += v * v;
  });
  return acc;
}

QuestionContext encode_question(const ModelParams& params, std::span<const WordId> words) {
  if (words.empty()) throw std::invalid_argument("question must contain at least one word");
  QuestionContext ctx;
  ctx.words.assign(words.begin(), words.end());
  ctx.word_proj = Matrix(words.size(), params.dims.hidden_dim);
  for (std::size_t k = 0; k < words.size(); ++k) {
    check_word(params, words[k]);
    gemv_add(params.att_word, params.word_embedding.row(words[k].value), ctx.word_proj.row(k));
  }
  return ctx;
}

StepTrace step(const ModelParams& params, const QuestionContext& question, std::span<const double> h_prev,
               RelationId prev_relation, std::optional<EntityId> prev_entity) {
  const std::size_t H = params.dims.hidden_dim;
  const std::size_t E = params.dims.entity_dim;
  const std::size_t W = params.dims.word_dim;
  const std::size_t Q = question.words.size();
  if (Q == 0) throw std::invalid_argument("question must contain at least one word");
  if (h_prev.size() != H) throw std::invalid_argument("hidden state has the wrong size");
  if (prev_entity) check_entity(params, *prev_entity);

  StepTrace s;
  s.prev_relation = prev_relation;
  s.prev_entity = prev_entity;
  s.h_prev.assign(h_prev.begin(), h_prev.end());
  const auto x_row = params.relation_embedding.row(params.relation_row(prev_relation));
  s.input.assign(x_row.begin(), x_row.end());

  // GRU
  std::vector<double> a_z(bias_row(params.gru_update_bias).begin(), bias_row(params.gru_update_bias).end());
  gemv_add(params.gru_update_input, s.input, a_z);
  gemv_add(params.gru_update_hidden, s.h_prev, a_z);
  std::vector<double> a_r(bias_row(params.gru_reset_bias).begin(), bias_row(params.gru_reset_bias).end());
  gemv_add(params.gru_reset_input, s.input, a_r);
  gemv_add(params.gru_reset_hidden, s.h_prev, a_r);
  s.update_gate.resize(H);
  s.reset_gate.resize(H);
  s.reset_hidden.resize(H);
  for (std::size_t i = 0; i < H; ++i) {
    s.update_gate[i] = sigmoid(a_z[i]);
    s.reset_gate[i] = sigmoid(a_r[i]);
    s.reset_hidden[i] = s.reset_gate[i] * s.h_prev[i];
  }
  std::vector<double> a_n(bias_row(params.gru_cand_bias).begin(), bias_row(params.gru_cand_bias).end());
  gemv_add(params.gru_cand_input, s.input, a_n);
  gemv_add(params.gru_cand_hidden, s.reset_hidden, a_n);
  s.candidate.resize(H);
  s.h_tmp.resize(H);
  for (std::size_t i = 0; i < H; ++i) {
    s.candidate[i] = std::tanh(a_n[i]);
    s.h_tmp[i] = (1.0 - s.update_gate[i]) * s.h_prev[i] + s.update_gate[i] * s.candidate[i];
  }

  // Attention over question words.
  std::vector<double> base(bias_row(params.att_bias).begin(), bias_row(params.att_bias).end());
  gemv_add(params.att_hidden, s.h_tmp, base);
  s.att_activation = Matrix(Q, H);
  s.att_scores.resize(Q);
  for (std::size_t k = 0; k < Q; ++k) {
    auto act = s.att_activation.row(k);
    const auto proj = question.word_proj.row(k);
    for (std::size_t i = 0; i < H; ++i) act[i] = std::tanh(base[i] + proj[i]);
    s.att_scores[k] = dot(params.att_out.row(0), act);
  }
  s.att_weights = s.att_scores;
  log_softmax(s.att_weights);
  for (double& a : s.att_weights) a = std::exp(a);
  s.context.assign(W, 0.0);
  for (std::size_t k = 0; k < Q; ++k) {
    axpy(s.att_weights[k], params.word_embedding.row(question.words[k].value), s.context);
  }

  // h_t = ReLU(F [h'; emb_e(e_{t-1}); c] + b)
  s.concat.assign(H + E + W, 0.0);
  std::copy(s.h_tmp.begin(), s.h_tmp.end(), s.concat.begin());
  if (prev_entity) {
    const auto ent = params.entity_embedding.row(prev_entity->value);
    std::copy(ent.begin(), ent.end(), s.concat.begin() + static_cast<std::ptrdiff_t>(H));
  }
  std::copy(s.context.begin(), s.context.end(), s.concat.begin() + static_cast<std::ptrdiff_t>(H + E));
  s.pre_activation.assign(bias_row(params.proj_bias).begin(), bias_row(params.proj_bias).end());
  gemv_add(params.proj_weight, s.concat, s.pre_activation);
  s.hidden.resize(H);
  for (std::size_t i = 0; i < H; ++i) s.hidden[i] = std::max(0.0, s.pre_activation[i]);

  s.relation_log_probs.resize(params.output_size());
  for (std::size_t j = 0; j < params.output_size(); ++j) {
    s.relation_log_probs[j] = dot(params.relation_embedding.row(j), s.hidden);
  }
  log_softmax(s.relation_log_probs);
  return s;
}

StepTrace step(const ModelParams& params, std::span<const WordId> question, std::span<const double> h_prev,
               RelationId prev_relation, std::optional<EntityId> prev_entity) {
  return step(params, encode_question(params, question), h_prev, prev_relation, prev_entity);
}

double entity_transition_prob(const KnowledgeBase& kb, EntityId prev, RelationId relation, EntityId next) {
  const auto tails = kb.lookup_tails(prev, relation);
  if (!std::binary_search(tails.begin(), tails.end(), next)) return 0.0;
  return 1.0 / static_cast<double>(tails.size());
}

ScoredPath score_path(const ModelParams& params, const KnowledgeBase& kb, const QuestionContext& question,
                      const ReasoningPath& path) {
  kb.validate_path(path);
  const std::size_t T = path.hops();
  ScoredPath out;
  out.trace.steps.reserve(T + 1);
  std::vector<double> h(params.dims.hidden_dim, 0.0);
  RelationId prev = kStartRelation;
  for (std::size_t t = 0; t < T; ++t) {
    StepTrace s = step(params, question, h, prev, path.entities[t]);
    const std::size_t target = params.relation_row(path.relations[t]);
    out.log_prob.relation_terms.push_back(s.relation_log_probs[target]);
    h = s.hidden;
    prev = path.relations[t];
    out.trace.steps.push_back(std::move(s));
    out.trace.targets.push_back(target);
    if (t + 1 < T) {
      const double m = entity_transition_prob(kb, path.entities[t], path.relations[t], path.entities[t + 1]);
      out.log_prob.entity_terms.push_back(std::log(m));
    }
  }
  StepTrace stop = step(params, question, h, prev, std::nullopt);
  out.log_prob.stop_term = stop.relation_log_probs[params.stop_row()];
  out.trace.steps.push_back(std::move(stop));
  out.trace.targets.push_back(params.stop_row());

  double total = out.log_prob.stop_term;
  for (double v : out.log_prob.relation_terms) total += v;
  for (double v : out.log_prob.entity_terms) total += v;
  out.log_prob.total = total;
  return out;
}

PathLogProb path_log_prob(const ModelParams& params, const KnowledgeBase& kb, std::span<const WordId> question,
                          const ReasoningPath& path) {
  return score_path(params, kb, encode_question(params, question), path).log_prob;
}

double answer_log_prob_exhaustive(const ModelParams& params, const KnowledgeBase& kb,
                                  std::span<const WordId> question, EntityId e0, EntityId y, int max_hops) {
  const auto paths = enumerate_paths(kb, e0, y, max_hops);
  if (paths.empty()) return kNegInf;
  const QuestionContext ctx = encode_question(params, question);
  std::vector<double> terms;
  terms.reserve(paths.size());
  for (const auto& p : paths) {
    const double answer_term = -std::log(static_cast<double>(final_answer_set(kb, p).size()));
    terms.push_back(score_path(params, kb, ctx, p).log_prob.total + answer_term);
  }
  return log_sum_exp(terms);
}

namespace {

// Backward through one step. dh_next is dL/dh_t arriving from the following
// step; returns dL/dh_{t-1}.
std::vector<double> backprop_step(const ModelParams& params, const QuestionContext& question, const StepTrace& s,
                                  std::size_t target, double scale, std::span<const double> dh_next,
                                  ModelParams& g, Matrix& d_word_proj) {
  const std::size_t H = params.dims.hidden_dim;
  const std::size_t E = params.dims.entity_dim;
  const std::size_t W = params.dims.word_dim;
  const std::size_t Q = question.words.size();

  // Output layer: d/dlogit_j of scale * log softmax_target.
  std::vector<double> dh(dh_next.begin(), dh_next.end());
  for (std::size_t j = 0; j < params.output_size(); ++j) {
    const double gj = scale * ((j == target ? 1.0 : 0.0) - std::exp(s.relation_log_probs[j]));
    axpy(gj, params.relation_embedding.row(j), dh);
    axpy(gj, s.hidden, g.relation_embedding.row(j));
  }

  std::vector<double> dpre(H);
  for (std::size_t i = 0; i < H; ++i) dpre[i] = s.pre_activation[i] > 0.0 ? dh[i] : 0.0;
  outer_add(g.proj_weight, dpre, s.concat);
  axpy(1.0, dpre, g.proj_bias.row(0));
  std::vector<double> dconcat(H + E + W, 0.0);
  gemv_t_add(params.proj_weight, dpre, dconcat);

  std::vector<double> dh_tmp(dconcat.begin(), dconcat.begin() + static_cast<std::ptrdiff_t>(H));
  if (s.prev_entity) {
    axpy(1.0, std::span<const double>(dconcat).subspan(H, E), g.entity_embedding.row(s.prev_entity->value));
  }
  const std::span<const double> dc = std::span<const double>(dconcat).subspan(H + E, W);

  // Context and attention softmax.
  std::vector<double> dalpha(Q);
  double mean = 0.0;
  for (std::size_t k = 0; k < Q; ++k) {
    const std::size_t w = question.words[k].value;
    dalpha[k] = dot(dc, params.word_embedding.row(w));
    axpy(s.att_weights[k], dc, g.word_embedding.row(w));
    mean += s.att_weights[k] * dalpha[k];
  }
  std::vector<double> dbase(H, 0.0);
  std::vector<double> da(H);
  for (std::size_t k = 0; k < Q; ++k) {
    const double du = s.att_weights[k] * (dalpha[k] - mean);
    if (du == 0.0) continue;
    const auto act = s.att_activation.row(k);
    axpy(du, act, g.att_out.row(0));
    const auto v = params.att_out.row(0);
    for (std::size_t i = 0; i < H; ++i) da[i] = du * v[i] * (1.0 - act[i] * act[i]);
    axpy(1.0, da, dbase);
    axpy(1.0, da, d_word_proj.row(k));
  }
  axpy(1.0, dbase, g.att_bias.row(0));
  outer_add(g.att_hidden, dbase, s.h_tmp);
  gemv_t_add(params.att_hidden, dbase, dh_tmp);

  // GRU: h' = (1 - z) h_prev + z n
  std::vector<double> dh_prev(H), da_n(H), dz(H);
  for (std::size_t i = 0; i < H; ++i) {
    const double z = s.update_gate[i];
    const double n = s.candidate[i];
    dh_prev[i] = dh_tmp[i] * (1.0 - z);
    da_n[i] = dh_tmp[i] * z * (1.0 - n * n);
    dz[i] = dh_tmp[i] * (n - s.h_prev[i]) * z * (1.0 - z);
  }
  std::vector<double> dx(params.dims.relation_dim, 0.0);
  outer_add(g.gru_cand_input, da_n, s.input);
  outer_add(g.gru_cand_hidden, da_n, s.reset_hidden);
  axpy(1.0, da_n, g.gru_cand_bias.row(0));
  gemv_t_add(params.gru_cand_input, da_n, dx);
  std::vector<double> drh(H, 0.0);
  gemv_t_add(params.gru_cand_hidden, da_n, drh);

  std::vector<double> da_r(H);
  for (std::size_t i = 0; i < H; ++i) {
    const double r = s.reset_gate[i];
    dh_prev[i] += drh[i] * r;
    da_r[i] = drh[i] * s.h_prev[i] * r * (1.0 - r);
  }
  outer_add(g.gru_reset_input, da_r, s.input);
  outer_add(g.gru_reset_hidden, da_r, s.h_prev);
  axpy(1.0, da_r, g.gru_reset_bias.row(0));
  gemv_t_add(params.gru_reset_input, da_r, dx);
  gemv_t_add(params.gru_reset_hidden, da_r, dh_prev);

  outer_add(g.gru_update_input, dz, s.input);
  outer_add(g.gru_update_hidden, dz, s.h_prev);
  axpy(1.0, dz, g.gru_update_bias.row(0));
  gemv_t_add(params.gru_update_input, dz, dx);
  gemv_t_add(params.gru_update_hidden, dz, dh_prev);

  axpy(1.0, dx, g.relation_embedding.row(params.relation_row(s.prev_relation)));
  return dh_prev;
}

}  // namespace

void backprop_path(const ModelParams& params, const QuestionContext& question, const ForwardTrace& trace,
                   double scale, ModelParams& grad, Matrix& d_word_proj) {
  std::vector<double> dh(params.dims.hidden_dim, 0.0);
  for (std::size_t t = trace.steps.size(); t-- > 0;) {
    dh = backprop_step(params, question, trace.steps[t], trace.targets[t], scale, dh, grad, d_word_proj);
  }
}

void backprop_question(const ModelParams& params, const QuestionContext& question, const Matrix& d_word_proj,
                       ModelParams& grad) {
  for (std::size_t k = 0; k < question.words.size(); ++k) {
    const std::size_t w = question.words[k].value;
    const auto d = d_word_proj.row(k);
    outer_add(grad.att_word, d, params.word_embedding.row(w));
    gemv_t_add(params.att_word, d, grad.word_embedding.row(w));
  }
}

ModelParams path_log_prob_gradient(const ModelParams& params, const KnowledgeBase& kb,
                                   std::span<const WordId> question, const ReasoningPath& path) {
  const QuestionContext ctx = encode_question(params, question);
  const ScoredPath scored = score_path(params, kb, ctx, path);
  ModelParams grad = ModelParams::zeros(params.dims);
  Matrix d_word_proj(ctx.words.size(), params.dims.hidden_dim);
  backprop_path(params, ctx, scored.trace, 1.0, grad, d_word_proj);
  backprop_question(params, ctx, d_word_proj, grad);
  return grad;
}

}  // namespace kbqa
