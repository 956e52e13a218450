#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kbqa/dataset.hpp"
#include "kbqa/kb_store.hpp"
#include "kbqa/path_model.hpp"

namespace kbqa {

enum class ObjectiveVariant { single_ground_truth, single_random, multiple_product, multiple_marginal };

// Short names used on the command line: gt, random, product, marginal.
std::string_view objective_name(ObjectiveVariant v);
// Accepts the short names and the full enumerator names.
std::optional<ObjectiveVariant> parse_objective(std::string_view name);

struct TrainingConfig {
  int max_hops = 3;
  std::size_t k1_base = 15;  // effective k1 = k1_base + |gold answers|
  double k2_fraction = 0.5;  // 1 disables per-batch re-selection
  double learning_rate = 0.1;
  std::size_t batch_size = 10;
  int epochs = 50;
  std::uint64_t seed = 1;
  ObjectiveVariant objective = ObjectiveVariant::multiple_marginal;
  double clip_norm = 5.0;
  double weight_decay = 0.0;  // L2 penalty (weight_decay/2)|theta|^2 added per batch
  bool warm_start = false;  // first epoch trains single_ground_truth
  // Entity embeddings stay at their initial values unless set. Trained
  // per-entity vectors let the model memorize answers for topic entities it
  // has seen instead of reading the question.
  bool train_entity_embeddings = false;

  // Training words seen fewer times map to <unk> (applied when the
  // vocabulary is built, before train is called).
  std::size_t min_word_count = 2;

  std::size_t word_dim = 32;
  std::size_t entity_dim = 32;
  std::size_t hidden_dim = 32;  // also the relation embedding width

  void validate() const;  // throws ConfigError
};

std::size_t effective_k1(const TrainingConfig& config, const QAInstance& instance);

// Filtered DFS paths per instance. An empty list marks an excluded instance.
struct CandidateSet {
  std::vector<std::vector<ReasoningPath>> paths;
  std::size_t excluded = 0;
};

// Instances must carry a single answer (see expand_multi_answer).
CandidateSet build_candidates(std::span<const QAInstance> instances, const KnowledgeBase& kb,
                              const TrainingConfig& config);

// The ceil(fraction * |paths|) most probable paths (at least one), most
// probable first, ties in path_less order.
std::vector<ReasoningPath> select_top_paths(const ModelParams& params, const KnowledgeBase& kb,
                                            std::span<const WordId> question, std::span<const ReasoningPath> paths,
                                            double fraction);
std::vector<std::size_t> select_top_indices(std::span<const double> log_probs, std::span<const ReasoningPath> paths,
                                            double fraction);

// One question/answer pair with the paths its objective sums over.
struct TrainingExample {
  std::vector<WordId> question;
  EntityId answer;
  std::vector<ReasoningPath> paths;
};

// Negated objective. The single-path variants use the same formula as
// multiple_marginal on a one-element path list.
double example_loss(const ModelParams& params, const KnowledgeBase& kb, const TrainingExample& example,
                    ObjectiveVariant variant);
double batch_loss(const ModelParams& params, const KnowledgeBase& kb, std::span<const TrainingExample> batch,
                  ObjectiveVariant variant);
// Returns the batch loss and adds its gradient to grad.
double batch_loss_gradient(const ModelParams& params, const KnowledgeBase& kb,
                           std::span<const TrainingExample> batch, ObjectiveVariant variant, ModelParams& grad);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // summed over the epoch's batches
  double dev_loss = 0.0;    // mean marginal NLL over all dev candidates
  std::optional<double> dev_metric;
};

struct TrainingReport {
  std::size_t instances = 0;           // after multi-answer expansion
  std::size_t excluded_no_paths = 0;   // empty candidate set
  std::size_t excluded_no_gt_path = 0; // annotated path does not reach the answer
  std::vector<EpochLog> epochs;
};

struct TrainingResult {
  ModelParams params;
  TrainingReport report;
};

using DevMetric = std::function<double(const ModelParams&)>;

ModelDims dims_for(const TrainingConfig& config, const KnowledgeBase& kb, std::size_t vocab_size);

// Multi-answer instances are expanded internally. Throws TrainingError on a
// non-finite loss and when single_ground_truth meets an unannotated instance.
TrainingResult train(std::span<const QAInstance> train_set, const KnowledgeBase& kb, std::size_t vocab_size,
                     const TrainingConfig& config, std::span<const QAInstance> dev_set = {},
                     const DevMetric& dev_metric = {});

std::string report_to_json(const TrainingReport& report);
std::string config_to_json(const TrainingConfig& config);

}  // namespace kbqa
