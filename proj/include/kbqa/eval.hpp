#pragma once

#include <span>
#include <string>
#include <vector>

#include "kbqa/dataset.hpp"
#include "kbqa/inference.hpp"
#include "kbqa/training.hpp"

namespace kbqa {

// Set F1; 0 when predicted is empty. Throws std::invalid_argument on empty gold.
double f1(std::span<const EntityId> predicted, std::span<const EntityId> gold);
// 1 iff the two sets are equal. Throws std::invalid_argument on empty gold.
double set_accuracy(std::span<const EntityId> predicted, std::span<const EntityId> gold);

// Answers scoring at least tau times the best score, smallest id first.
std::vector<EntityId> predicted_set(const RankedAnswers& ranked, double tau);

struct GroupMetrics {
  std::size_t count = 0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

struct MetricsReport {
  GroupMetrics all;
  GroupMetrics single_path;  // every gold answer has exactly one path
  GroupMetrics multi_path;   // some gold answer has two or more
  std::size_t no_answer = 0;
};

struct EvalOptions {
  PredictOptions predict;
  double tau = 0.5;
};

// Instances sharing a question text are scored once against the union of
// their gold sets. With several topic entities the prediction whose best
// answer scores highest is used.
MetricsReport evaluate(const ModelParams& params, const KnowledgeBase& kb, const Vocabulary& vocab,
                       std::span<const QAInstance> instances, const EvalOptions& options);

std::string metrics_to_json(const MetricsReport& report);
std::string metrics_to_text(const MetricsReport& report);

struct AblationRow {
  ObjectiveVariant variant;
  MetricsReport metrics;
};

// Trains every objective variant from the same config and seed.
std::vector<AblationRow> ablate(std::span<const QAInstance> train_set, std::span<const QAInstance> dev_set,
                                std::span<const QAInstance> test_set, const KnowledgeBase& kb,
                                const Vocabulary& vocab, const TrainingConfig& base, const EvalOptions& options);

std::string ablation_to_json(const std::vector<AblationRow>& rows);
std::string ablation_to_text(const std::vector<AblationRow>& rows);

}  // namespace kbqa
