#include "kbqa/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace kbqa {

namespace {

std::set<EntityId> as_set(std::span<const EntityId> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

double f1(std::span<const EntityId> predicted, std::span<const EntityId> gold) {
  if (gold.empty()) throw std::invalid_argument("f1 needs a non-empty gold set");
  const auto p = as_set(predicted);
  const auto g = as_set(gold);
  if (p.empty()) return 0.0;
  std::size_t hit = 0;
  for (EntityId e : p) hit += g.contains(e) ? 1 : 0;
  if (hit == 0) return 0.0;
  const double precision = static_cast<double>(hit) / static_cast<double>(p.size());
  const double recall = static_cast<double>(hit) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double set_accuracy(std::span<const EntityId> predicted, std::span<const EntityId> gold) {
  if (gold.empty()) throw std::invalid_argument("set_accuracy needs a non-empty gold set");
  return as_set(predicted) == as_set(gold) ? 1.0 : 0.0;
}

std::vector<EntityId> predicted_set(const RankedAnswers& ranked, double tau) {
  std::vector<EntityId> out;
  if (ranked.empty()) return out;
  const double top = ranked.front().second;
  for (const auto& [y, score] : ranked) {
    if (score >= tau * top) out.push_back(y);
  }
  std::sort(out.begin(), out.end());
  return out;
}

MetricsReport evaluate(const ModelParams& params, const KnowledgeBase& kb, const Vocabulary& vocab,
                       std::span<const QAInstance> instances, const EvalOptions& options) {
  std::map<std::string, std::vector<const QAInstance*>> groups;
  std::vector<std::string> order;
  for (const auto& inst : instances) {
    auto [it, fresh] = groups.try_emplace(inst.text);
    if (fresh) order.push_back(inst.text);
    it->second.push_back(&inst);
  }

  MetricsReport report;
  auto add = [](GroupMetrics& g, double f, double a) {
    ++g.count;
    g.f1 += f;
    g.accuracy += a;
  };
  for (const auto& text : order) {
    const auto& members = groups[text];
    std::set<EntityId> gold;
    std::set<EntityId> topics;
    bool multi = false;
    for (const auto* inst : members) {
      gold.insert(inst->gold_answers.begin(), inst->gold_answers.end());
      if (topics.insert(inst->topic).second) multi = multi || has_multiple_paths(kb, *inst, options.predict.max_hops);
    }
    std::optional<RankedAnswers> best;
    std::set<EntityId> predicted_topics;
    for (const auto* inst : members) {
      if (!predicted_topics.insert(inst->topic).second) continue;
      auto pred = predict(params, kb, vocab, inst->question, inst->topic, options.predict);
      if (pred.ranked_answers.empty()) continue;
      if (!best || pred.ranked_answers.front().second > best->front().second) best = std::move(pred.ranked_answers);
    }
    const std::vector<EntityId> gold_list(gold.begin(), gold.end());
    std::vector<EntityId> predicted;
    if (best) {
      predicted = predicted_set(*best, options.tau);
    } else {
      ++report.no_answer;
    }
    const double f = f1(predicted, gold_list);
    const double a = set_accuracy(predicted, gold_list);
    add(report.all, f, a);
    add(multi ? report.multi_path : report.single_path, f, a);
  }
  for (auto* g : {&report.all, &report.single_path, &report.multi_path}) {
    if (g->count > 0) {
      g->f1 /= static_cast<double>(g->count);
      g->accuracy /= static_cast<double>(g->count);
    }
  }
  return report;
}

namespace {

nlohmann::ordered_json group_json(const GroupMetrics& g) {
  nlohmann::ordered_json j;
  j["count"] = g.count;
  j["f1"] = g.f1;
  j["accuracy"] = g.accuracy;
  return j;
}

nlohmann::ordered_json metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["all"] = group_json(r.all);
  j["1 path"] = group_json(r.single_path);
  j[">1 path"] = group_json(r.multi_path);
  j["no_answer"] = r.no_answer;
  return j;
}

std::string percent(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * x;
  return os.str();
}

}  // namespace

std::string metrics_to_json(const MetricsReport& report) { return metrics_json(report).dump(2); }

std::string metrics_to_text(const MetricsReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "group" << std::right << std::setw(8) << "count" << std::setw(8) << "F1"
     << std::setw(8) << "acc" << '\n';
  auto row = [&](const char* name, const GroupMetrics& g) {
    os << std::left << std::setw(10) << name << std::right << std::setw(8) << g.count << std::setw(8) << percent(g.f1)
       << std::setw(8) << percent(g.accuracy) << '\n';
  };
  row("1 path", r.single_path);
  row(">1 path", r.multi_path);
  row("all", r.all);
  os << "no answer: " << r.no_answer << '\n';
  return os.str();
}

std::vector<AblationRow> ablate(std::span<const QAInstance> train_set, std::span<const QAInstance> dev_set,
                                std::span<const QAInstance> test_set, const KnowledgeBase& kb,
                                const Vocabulary& vocab, const TrainingConfig& base, const EvalOptions& options) {
  std::vector<AblationRow> rows;
  for (auto v : {ObjectiveVariant::single_ground_truth, ObjectiveVariant::single_random,
                 ObjectiveVariant::multiple_product, ObjectiveVariant::multiple_marginal}) {
    TrainingConfig config = base;
    config.objective = v;
    const auto trained = train(train_set, kb, vocab.size(), config, dev_set);
    rows.push_back({v, evaluate(trained.params, kb, vocab, test_set, options)});
  }
  return rows;
}

std::string ablation_to_json(const std::vector<AblationRow>& rows) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r;
    r["objective"] = std::string(objective_name(row.variant));
    r["metrics"] = metrics_json(row.metrics);
    j.push_back(std::move(r));
  }
  return j.dump(2);
}

std::string ablation_to_text(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "objective" << std::right << std::setw(10) << "1 path" << std::setw(10)
     << ">1 path" << std::setw(10) << "all" << std::setw(10) << "acc" << '\n';
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    os << std::left << std::setw(10) << objective_name(row.variant) << std::right << std::setw(10)
       << percent(m.single_path.f1) << std::setw(10) << percent(m.multi_path.f1) << std::setw(10) << percent(m.all.f1)
       << std::setw(10) << percent(m.all.accuracy) << '\n';
  }
  return os.str();
}

}  // namespace kbqa
