#include "kbqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "kbqa/errors.hpp"
#include "kbqa/numeric.hpp"

namespace kbqa {

std::string_view objective_name(ObjectiveVariant v) {
  switch (v) {
    case ObjectiveVariant::single_ground_truth: return "gt";
    case ObjectiveVariant::single_random: return "random";
    case ObjectiveVariant::multiple_product: return "product";
    case ObjectiveVariant::multiple_marginal: return "marginal";
  }
  return "?";
}

std::optional<ObjectiveVariant> parse_objective(std::string_view name) {
  if (name == "gt" || name == "single_ground_truth") return ObjectiveVariant::single_ground_truth;
  if (name == "random" || name == "single_random") return ObjectiveVariant::single_random;
  if (name == "product" || name == "multiple_product") return ObjectiveVariant::multiple_product;
  if (name == "marginal" || name == "multiple_marginal") return ObjectiveVariant::multiple_marginal;
  return std::nullopt;
}

void TrainingConfig::validate() const {
  if (max_hops < 1) throw ConfigError("max_hops must be at least 1");
  if (!(k2_fraction > 0.0 && k2_fraction <= 1.0)) throw ConfigError("k2_fraction must lie in (0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (min_word_count == 0) throw ConfigError("min_word_count must be at least 1");
  if (word_dim == 0 || entity_dim == 0 || hidden_dim == 0) throw ConfigError("embedding widths must be positive");
}

std::size_t effective_k1(const TrainingConfig& config, const QAInstance& instance) {
  return config.k1_base + instance.gold_answers.size();
}

CandidateSet build_candidates(std::span<const QAInstance> instances, const KnowledgeBase& kb,
                              const TrainingConfig& config) {
  CandidateSet out;
  for (const auto& inst : instances) {
    if (inst.answers.size() != 1) throw std::invalid_argument("build_candidates expects single-answer instances");
    auto all = enumerate_paths(kb, inst.topic, inst.answers.front(), config.max_hops);
    out.paths.push_back(filter_paths_by_fanout(kb, all, effective_k1(config, inst)));
    if (out.paths.back().empty()) ++out.excluded;
  }
  return out;
}

std::vector<std::size_t> select_top_indices(std::span<const double> log_probs, std::span<const ReasoningPath> paths,
                                            double fraction) {
  if (paths.empty()) throw std::invalid_argument("select_top_paths needs at least one path");
  if (log_probs.size() != paths.size()) throw std::invalid_argument("one log-probability per path expected");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must lie in (0, 1]");
  std::vector<std::size_t> order(paths.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (log_probs[a] != log_probs[b]) return log_probs[a] > log_probs[b];
    return path_less(paths[a], paths[b]);
  });
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(paths.size()) - 1e-9)));
  order.resize(std::min(keep, order.size()));
  return order;
}

std::vector<ReasoningPath> select_top_paths(const ModelParams& params, const KnowledgeBase& kb,
                                            std::span<const WordId> question, std::span<const ReasoningPath> paths,
                                            double fraction) {
  if (paths.empty()) throw std::invalid_argument("select_top_paths needs at least one path");
  const auto ctx = encode_question(params, question);
  std::vector<double> lps;
  for (const auto& p : paths) lps.push_back(score_path(params, kb, ctx, p).log_prob.total);
  std::vector<ReasoningPath> out;
  for (auto i : select_top_indices(lps, paths, fraction)) out.push_back(paths[i]);
  return out;
}

namespace {

bool is_single(ObjectiveVariant v) {
  return v == ObjectiveVariant::single_ground_truth || v == ObjectiveVariant::single_random;
}

// log p(y|p,q) + log p(p|q) with p(y|p,q) = 1/|final answer set|.
double joint_log_weight(const KnowledgeBase& kb, const ReasoningPath& path, const ScoredPath& scored) {
  return scored.log_prob.total - std::log(static_cast<double>(final_answer_set(kb, path).size()));
}

// Loss of one example from already scored paths; adds the gradient to grad
// when given.
double scored_loss(const ModelParams& params, const KnowledgeBase& kb, const QuestionContext& ctx,
                   std::span<const ReasoningPath> paths, std::span<const ScoredPath> scored, ObjectiveVariant variant,
                   ModelParams* grad) {
  std::vector<double> w;
  for (std::size_t i = 0; i < paths.size(); ++i) w.push_back(joint_log_weight(kb, paths[i], scored[i]));
  const bool product = variant == ObjectiveVariant::multiple_product;
  double loss = 0.0;
  if (product) {
    for (double x : w) loss -= x;
  } else {
    loss = -log_sum_exp(w);
  }
  if (grad) {
    Matrix d_word_proj(ctx.words.size(), params.dims.hidden_dim);
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const double scale = product ? -1.0 : -std::exp(w[i] + loss);
      backprop_path(params, ctx, scored[i].trace, scale, *grad, d_word_proj);
    }
    backprop_question(params, ctx, d_word_proj, *grad);
  }
  return loss;
}

double example_loss_impl(const ModelParams& params, const KnowledgeBase& kb, const TrainingExample& example,
                         ObjectiveVariant variant, ModelParams* grad) {
  if (example.paths.empty()) throw std::invalid_argument("training example without paths");
  if (is_single(variant) && example.paths.size() != 1) {
    throw std::invalid_argument("single-path objectives take exactly one path");
  }
  const auto ctx = encode_question(params, example.question);
  std::vector<ScoredPath> scored;
  for (const auto& p : example.paths) {
    const auto tails = final_answer_set(kb, p);
    if (!std::binary_search(tails.begin(), tails.end(), example.answer)) {
      throw std::invalid_argument("path does not lead to the answer: " + describe_path(kb, p));
    }
    scored.push_back(score_path(params, kb, ctx, p));
  }
  return scored_loss(params, kb, ctx, example.paths, scored, variant, grad);
}

}  // namespace

double example_loss(const ModelParams& params, const KnowledgeBase& kb, const TrainingExample& example,
                    ObjectiveVariant variant) {
  return example_loss_impl(params, kb, example, variant, nullptr);
}

double batch_loss(const ModelParams& params, const KnowledgeBase& kb, std::span<const TrainingExample> batch,
                  ObjectiveVariant variant) {
  double total = 0.0;
  for (const auto& ex : batch) total += example_loss_impl(params, kb, ex, variant, nullptr);
  return total;
}

double batch_loss_gradient(const ModelParams& params, const KnowledgeBase& kb,
                           std::span<const TrainingExample> batch, ObjectiveVariant variant, ModelParams& grad) {
  double total = 0.0;
  for (const auto& ex : batch) {
    ModelParams own = ModelParams::zeros(params.dims);
    total += example_loss_impl(params, kb, ex, variant, &own);
    add_scaled(grad, own, 1.0);
  }
  return total;
}

ModelDims dims_for(const TrainingConfig& config, const KnowledgeBase& kb, std::size_t vocab_size) {
  ModelDims dims;
  dims.word_dim = config.word_dim;
  dims.entity_dim = config.entity_dim;
  dims.relation_dim = config.hidden_dim;
  dims.hidden_dim = config.hidden_dim;
  dims.word_count = vocab_size;
  dims.entity_count = kb.entity_count();
  dims.relation_count = kb.relation_count();
  return dims;
}

namespace {

// The annotated path when it reaches the answer, else the first candidate
// with the same relation sequence that does.
std::optional<ReasoningPath> ground_truth_path(const KnowledgeBase& kb, const QAInstance& inst, int max_hops) {
  const auto& p = *inst.annotated_path;
  const EntityId y = inst.answers.front();
  const auto tails = final_answer_set(kb, p);
  if (std::binary_search(tails.begin(), tails.end(), y)) return p;
  for (auto& q : enumerate_paths(kb, inst.topic, y, std::max<int>(max_hops, static_cast<int>(p.hops())))) {
    if (q.relations == p.relations) return q;
  }
  return std::nullopt;
}

double dev_loss(const ModelParams& params, const KnowledgeBase& kb, std::span<const QAInstance> dev,
                const CandidateSet& candidates) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    if (candidates.paths[i].empty()) continue;
    const auto ctx = encode_question(params, dev[i].question);
    std::vector<ScoredPath> scored;
    for (const auto& p : candidates.paths[i]) scored.push_back(score_path(params, kb, ctx, p));
    total += scored_loss(params, kb, ctx, candidates.paths[i], scored, ObjectiveVariant::multiple_marginal, nullptr);
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

}  // namespace

TrainingResult train(std::span<const QAInstance> train_set, const KnowledgeBase& kb, std::size_t vocab_size,
                     const TrainingConfig& config, std::span<const QAInstance> dev_set, const DevMetric& dev_metric) {
  config.validate();
  const auto instances = expand_multi_answer({train_set.begin(), train_set.end()});
  const auto dev = expand_multi_answer({dev_set.begin(), dev_set.end()});

  TrainingResult result{init_params(dims_for(config, kb, vocab_size), config.seed), {}};
  auto& params = result.params;
  auto& report = result.report;
  report.instances = instances.size();

  const auto candidates = build_candidates(instances, kb, config);
  const auto dev_candidates = build_candidates(dev, kb, config);
  report.excluded_no_paths = candidates.excluded;

  Rng rng(config.seed ^ 0x5DEECE66Dull);
  const bool need_gt = config.objective == ObjectiveVariant::single_ground_truth || config.warm_start;
  std::vector<std::optional<ReasoningPath>> gt(instances.size()), fixed(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (need_gt) {
      if (!instances[i].annotated_path) {
        throw TrainingError("single_ground_truth needs an annotated path; question '" + instances[i].text +
                            "' has none");
      }
      gt[i] = ground_truth_path(kb, instances[i], config.max_hops);
      if (!gt[i] && config.objective == ObjectiveVariant::single_ground_truth) ++report.excluded_no_gt_path;
    }
    if (config.objective == ObjectiveVariant::single_random && !candidates.paths[i].empty()) {
      fixed[i] = candidates.paths[i][rng.index(candidates.paths[i].size())];
    }
    if (config.objective == ObjectiveVariant::single_ground_truth) fixed[i] = gt[i];
  }

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (candidates.paths[i].empty()) continue;
    if (config.objective == ObjectiveVariant::single_ground_truth && !gt[i]) continue;
    active.push_back(i);
  }

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const bool warm = config.warm_start && epoch == 1;
    const auto variant = warm ? ObjectiveVariant::single_ground_truth : config.objective;
    std::vector<std::size_t> order = active;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      ModelParams grad = ModelParams::zeros(params.dims);
      double loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const auto& inst = instances[i];
        const auto ctx = encode_question(params, inst.question);
        std::vector<ReasoningPath> paths;
        if (warm) {
          if (!gt[i]) continue;
          paths = {*gt[i]};
        } else if (is_single(variant)) {
          paths = {*fixed[i]};
        } else {
          paths = candidates.paths[i];
        }
        std::vector<ScoredPath> scored;
        for (const auto& p : paths) scored.push_back(score_path(params, kb, ctx, p));
        if (!is_single(variant) && config.k2_fraction < 1.0) {
          std::vector<double> lps;
          for (const auto& s : scored) lps.push_back(s.log_prob.total);
          std::vector<ReasoningPath> kept_paths;
          std::vector<ScoredPath> kept;
          for (auto k : select_top_indices(lps, paths, config.k2_fraction)) {
            kept_paths.push_back(std::move(paths[k]));
            kept.push_back(std::move(scored[k]));
          }
          paths = std::move(kept_paths);
          scored = std::move(kept);
        }
        ModelParams own = ModelParams::zeros(params.dims);
        loss += scored_loss(params, kb, ctx, paths, scored, variant, &own);
        add_scaled(grad, own, 1.0);
      }
      if (!std::isfinite(loss) || !grad.all_finite()) {
        std::ostringstream msg;
        msg << "non-finite loss in epoch " << epoch << ", batch starting at " << start
            << "; try a smaller learning_rate or clip_norm";
        throw TrainingError(msg.str());
      }
      if (config.weight_decay > 0.0) add_scaled(grad, params, config.weight_decay);
      if (!config.train_entity_embeddings) {
        auto frozen = grad.entity_embedding.values();
        std::fill(frozen.begin(), frozen.end(), 0.0);
      }
      const double norm = std::sqrt(squared_norm(grad));
      double scale = -config.learning_rate;
      if (norm > config.clip_norm) scale *= config.clip_norm / norm;
      add_scaled(params, grad, scale);
      epoch_loss += loss;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss;
    log.dev_loss = dev_loss(params, kb, dev, dev_candidates);
    if (dev_metric) log.dev_metric = dev_metric(params);
    report.epochs.push_back(log);
  }
  return result;
}

std::string report_to_json(const TrainingReport& report) {
  nlohmann::ordered_json j;
  j["instances"] = report.instances;
  j["excluded_no_paths"] = report.excluded_no_paths;
  j["excluded_no_gt_path"] = report.excluded_no_gt_path;
  auto epochs = nlohmann::ordered_json::array();
  for (const auto& e : report.epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["dev_loss"] = e.dev_loss;
    row["dev_metric"] = e.dev_metric ? nlohmann::ordered_json(*e.dev_metric) : nlohmann::ordered_json(nullptr);
    epochs.push_back(std::move(row));
  }
  j["epochs"] = std::move(epochs);
  return j.dump(2);
}

std::string config_to_json(const TrainingConfig& c) {
  nlohmann::ordered_json j;
  j["max_hops"] = c.max_hops;
  j["k1_base"] = c.k1_base;
  j["k2_fraction"] = c.k2_fraction;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["objective"] = std::string(objective_name(c.objective));
  j["clip_norm"] = c.clip_norm;
  j["weight_decay"] = c.weight_decay;
  j["warm_start"] = c.warm_start;
  j["train_entity_embeddings"] = c.train_entity_embeddings;
  j["min_word_count"] = c.min_word_count;
  j["word_dim"] = c.word_dim;
  j["entity_dim"] = c.entity_dim;
  j["hidden_dim"] = c.hidden_dim;
  return j.dump(2);
}

}  // namespace kbqa
