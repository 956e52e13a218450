#include "kbqa/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kbqa/checkpoint.hpp"
#include "kbqa/config.hpp"
#include "kbqa/errors.hpp"

namespace kbqa {

namespace {

using ordered_json = nlohmann::ordered_json;

const std::set<std::string> kTrainingKeys{"max_hops",   "seed",         "k1_base",       "k2_fraction",
                                          "learning_rate", "batch_size", "epochs",       "objective",
                                          "clip_norm",  "weight_decay", "warm_start",    "train_entity_embeddings",
                                          "min_word_count", "word_dim", "entity_dim",  "hidden_dim"};
const std::set<std::string> kSyntheticKeys{"max_hops",       "seed",          "entity_count", "relation_count",
                                           "type_count",     "min_branching", "max_branching", "multi_tail_prob",
                                           "hop_mix",        "multipath_rate", "max_alternative_routes", "synonyms_per_relation",
                                           "max_answers",    "train_size",    "dev_size",     "test_size"};
const std::set<std::string> kEvalKeys{"max_hops", "beam_width", "use_pmi", "tau"};

std::string flag_name(const std::string& key) {
  std::string out = "--" + key;
  for (char& c : out) {
    if (c == '_') c = '-';
  }
  return out;
}

// Setting flags of one subcommand; values are applied after the config file.
class SettingFlags {
 public:
  void add(CLI::App* app, const std::vector<const std::set<std::string>*>& groups) {
    for (const auto& key : setting_keys()) {
      bool wanted = false;
      for (const auto* g : groups) wanted = wanted || g->contains(key.name);
      if (!wanted) continue;
      auto& slot = slots_[key.name];
      if (key.is_flag) {
        slot.option = app->add_flag(flag_name(key.name), slot.flag, "see README");
      } else {
        slot.option = app->add_option(flag_name(key.name), slot.value, "see README");
      }
      slot.is_flag = key.is_flag;
    }
  }

  void apply(Settings& settings) const {
    for (const auto& [key, slot] : slots_) {
      if (slot.option->count() == 0) continue;
      apply_setting(settings, key, slot.is_flag ? (slot.flag ? "true" : "false") : slot.value);
    }
  }

 private:
  struct Slot {
    CLI::Option* option = nullptr;
    std::string value;
    bool flag = false;
    bool is_flag = false;
  };
  std::map<std::string, Slot> slots_;
};

struct Paths {
  std::string kb, data, dev, eval_data, config, checkpoint, out, question, topic;
};

Settings resolve_settings(const Paths& paths, const SettingFlags& flags) {
  Settings settings;
  if (!paths.config.empty()) load_settings(paths.config, settings);
  flags.apply(settings);
  return settings;
}

std::vector<QAInstance> load_instances(const std::string& file, const KnowledgeBase& kb, Vocabulary& vocab, bool grow,
                                       std::ostream& err) {
  auto report = load_dataset(file, kb, vocab, grow);
  for (const auto& p : report.problems) err << "warning: skipped " << p << '\n';
  if (report.instances.empty()) throw DataError("no usable question in " + file);
  return std::move(report.instances);
}

// The vocabulary comes from the training questions alone.
std::pair<std::vector<QAInstance>, Vocabulary> load_training_set(const std::string& file, const KnowledgeBase& kb,
                                                                 const TrainingConfig& config, std::ostream& err) {
  Vocabulary scratch;
  auto instances = load_instances(file, kb, scratch, true, err);
  auto vocab = build_vocabulary(instances, config.min_word_count);
  encode_questions(instances, vocab, false);
  return {std::move(instances), std::move(vocab)};
}

void check_dims(const Checkpoint& ckpt, const KnowledgeBase& kb) {
  const auto& d = ckpt.params.dims;
  if (d.entity_count != kb.entity_count() || d.relation_count != kb.relation_count()) {
    std::ostringstream msg;
    msg << "checkpoint expects " << d.entity_count << " entities and " << d.relation_count
        << " relations, the KB has " << kb.entity_count() << " and " << kb.relation_count();
    throw DimensionMismatch(msg.str());
  }
  if (d.word_count != ckpt.vocab.size()) throw DimensionMismatch("checkpoint vocabulary does not match its embeddings");
}

void write_text(const std::string& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw FileError("cannot write " + file);
  out << text;
}

ordered_json prediction_json(const KnowledgeBase& kb, const QAInstance& inst, const Prediction& pred, bool use_pmi) {
  ordered_json j;
  j["question"] = inst.text;
  j["topic_entity"] = kb.entity_name(inst.topic);
  j["answer"] = pred.answer ? ordered_json(kb.entity_name(*pred.answer)) : ordered_json(nullptr);
  j["use_pmi"] = use_pmi;
  auto answers = ordered_json::array();
  for (const auto& [y, score] : pred.ranked_answers) answers.push_back({kb.entity_name(y), score});
  j["ranked_answers"] = std::move(answers);
  auto paths = ordered_json::array();
  for (const auto& bp : pred.ranked_paths) {
    auto rels = ordered_json::array();
    for (auto r : bp.path.relations) rels.push_back(kb.relation_name(r));
    auto ents = ordered_json::array();
    for (auto e : bp.path.entities) ents.push_back(kb.entity_name(e));
    paths.push_back({rels, ents, bp.log_prob});
  }
  j["ranked_paths"] = std::move(paths);
  return j;
}

int cmd_generate(const Paths& paths, const SettingFlags& flags, std::ostream& out) {
  const auto settings = resolve_settings(paths, flags);
  const auto& spec = settings.synthetic;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  SyntheticCorpus corpus;
  try {
    corpus = generate_synthetic(spec);
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
  write_corpus(paths.out, corpus, spec);
  out << "wrote " << paths.out << ": " << corpus.kb.entity_count() << " entities, " << corpus.kb.relation_count()
      << " relations, " << corpus.kb.fact_count() << " facts\n";
  for (const auto& [name, split] : {std::pair{"train", &corpus.train}, {"dev", &corpus.dev}, {"test", &corpus.test}}) {
    out << "  " << name << ": " << split->size() << " questions, multipath fraction "
        << count_multipath_fraction(*split, corpus.kb, spec.max_hops) << '\n';
  }
  return kExitOk;
}

int cmd_train(const Paths& paths, const SettingFlags& flags, std::ostream& out, std::ostream& err) {
  const auto settings = resolve_settings(paths, flags);
  settings.training.validate();
  const auto kb = load_kb(paths.kb);
  auto [train_set, vocab] = load_training_set(paths.data, kb, settings.training, err);
  std::vector<QAInstance> dev_set;
  if (!paths.dev.empty()) dev_set = load_instances(paths.dev, kb, vocab, false, err);

  DevMetric metric;
  if (!dev_set.empty()) {
    metric = [&](const ModelParams& p) { return evaluate(p, kb, vocab, dev_set, settings.eval).all.f1; };
  }
  const auto result = train(train_set, kb, vocab.size(), settings.training, dev_set, metric);
  save_checkpoint(paths.checkpoint, {result.params, settings.training.seed, vocab});

  ordered_json report;
  report["config"] = ordered_json::parse(config_to_json(settings.training));
  report["vocabulary_size"] = vocab.size();
  report["training"] = ordered_json::parse(report_to_json(result.report));
  const std::string text = report.dump(2) + "\n";
  if (!paths.out.empty()) write_text(paths.out, text);

  out << "trained on " << result.report.instances << " question/answer pairs ("
      << result.report.excluded_no_paths << " without candidate paths";
  if (result.report.excluded_no_gt_path > 0) out << ", " << result.report.excluded_no_gt_path << " without a usable annotated path";
  out << ")\n";
  for (const auto& e : result.report.epochs) {
    out << "epoch " << e.epoch << "  loss " << e.train_loss << "  dev loss " << e.dev_loss;
    if (e.dev_metric) out << "  dev F1 " << *e.dev_metric;
    out << '\n';
  }
  out << "checkpoint: " << paths.checkpoint << '\n';
  return kExitOk;
}

Checkpoint load_checked(const Paths& paths, const KnowledgeBase& kb) {
  auto ckpt = load_checkpoint(paths.checkpoint);
  check_dims(ckpt, kb);
  return ckpt;
}

int cmd_predict(const Paths& paths, const SettingFlags& flags, std::ostream& out, std::ostream& err) {
  const auto settings = resolve_settings(paths, flags);
  const auto kb = load_kb(paths.kb);
  auto ckpt = load_checked(paths, kb);
  const auto instances = load_instances(paths.data, kb, ckpt.vocab, false, err);
  std::ostringstream lines;
  for (const auto& inst : instances) {
    const auto pred = predict(ckpt.params, kb, ckpt.vocab, inst.question, inst.topic, settings.eval.predict);
    lines << prediction_json(kb, inst, pred, settings.eval.predict.use_pmi).dump() << '\n';
  }
  if (paths.out.empty()) {
    out << lines.str();
  } else {
    write_text(paths.out, lines.str());
  }
  return kExitOk;
}

int cmd_eval(const Paths& paths, const SettingFlags& flags, std::ostream& out, std::ostream& err) {
  const auto settings = resolve_settings(paths, flags);
  const auto kb = load_kb(paths.kb);
  auto ckpt = load_checked(paths, kb);
  const auto instances = load_instances(paths.data, kb, ckpt.vocab, false, err);
  const auto report = evaluate(ckpt.params, kb, ckpt.vocab, instances, settings.eval);
  if (!paths.out.empty()) write_text(paths.out, metrics_to_json(report) + "\n");
  out << metrics_to_text(report);
  return kExitOk;
}

int cmd_ablate(const Paths& paths, const SettingFlags& flags, std::ostream& out, std::ostream& err) {
  const auto settings = resolve_settings(paths, flags);
  settings.training.validate();
  const auto kb = load_kb(paths.kb);
  auto [train_set, vocab] = load_training_set(paths.data, kb, settings.training, err);
  std::vector<QAInstance> dev_set;
  if (!paths.dev.empty()) dev_set = load_instances(paths.dev, kb, vocab, false, err);
  const auto test_set = load_instances(paths.eval_data, kb, vocab, false, err);
  const auto rows = ablate(train_set, dev_set, test_set, kb, vocab, settings.training, settings.eval);
  if (!paths.out.empty()) write_text(paths.out, ablation_to_json(rows) + "\n");
  out << ablation_to_text(rows);
  return kExitOk;
}

int cmd_inspect(const Paths& paths, const SettingFlags& flags, std::ostream& out) {
  const auto settings = resolve_settings(paths, flags);
  const auto kb = load_kb(paths.kb);
  auto ckpt = load_checked(paths, kb);
  const auto topic = kb.find_entity(paths.topic);
  if (!topic) throw DataError("unknown topic entity '" + paths.topic + "'");
  const auto words = ckpt.vocab.encode(paths.question, false);
  if (words.empty()) throw DataError("empty question");
  const auto pred = predict(ckpt.params, kb, ckpt.vocab, words, *topic, settings.eval.predict);
  out << "question: " << paths.question << '\n' << "topic entity: " << paths.topic << '\n';
  if (pred.ranked_paths.empty()) {
    out << "no path leaves the topic entity\n";
    return kExitOk;
  }
  // Beam results are already sorted by descending log-probability.
  for (const auto& bp : pred.ranked_paths) {
    out << std::setprecision(3) << std::setw(9) << std::left << std::exp(bp.log_prob) << std::right << "  ";
    for (std::size_t i = 0; i < bp.path.relations.size(); ++i) {
      out << (i ? " -> " : "") << kb.relation_name(bp.path.relations[i]);
    }
    out << "    " << describe_path(kb, bp.path) << '\n';
  }
  out << std::setprecision(6) << "answer: " << (pred.answer ? kb.entity_name(*pred.answer) : std::string("(none)")) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-hop question answering over a knowledge base with latent reasoning paths", "kbqa"};
  app.require_subcommand(1, 1);

  Paths paths;
  auto common = [&](CLI::App* sub) { sub->add_option("--config", paths.config, "key = value settings file"); };

  SettingFlags gen_flags, train_flags, predict_flags, eval_flags, ablate_flags, inspect_flags;

  auto* gen = app.add_subcommand("generate", "Write a synthetic KB and train/dev/test splits");
  gen->add_option("--out", paths.out, "output directory")->required();
  common(gen);
  gen_flags.add(gen, {&kSyntheticKeys});

  auto* tr = app.add_subcommand("train", "Train a path model and write a checkpoint");
  tr->add_option("--kb", paths.kb, "KB triples (TSV)")->required();
  tr->add_option("--data", paths.data, "training questions (JSONL)")->required();
  tr->add_option("--dev", paths.dev, "dev questions (JSONL)");
  tr->add_option("--checkpoint", paths.checkpoint, "checkpoint to write")->required();
  tr->add_option("--out", paths.out, "training report (JSON)");
  common(tr);
  train_flags.add(tr, {&kTrainingKeys, &kEvalKeys});

  auto* pr = app.add_subcommand("predict", "Answer questions with a trained checkpoint");
  pr->add_option("--kb", paths.kb, "KB triples (TSV)")->required();
  pr->add_option("--data", paths.data, "questions (JSONL)")->required();
  pr->add_option("--checkpoint", paths.checkpoint, "trained checkpoint")->required();
  pr->add_option("--out", paths.out, "predictions (JSONL); stdout when omitted");
  common(pr);
  predict_flags.add(pr, {&kEvalKeys});

  auto* ev = app.add_subcommand("eval", "Score predictions against gold answers");
  ev->add_option("--kb", paths.kb, "KB triples (TSV)")->required();
  ev->add_option("--data", paths.data, "questions (JSONL)")->required();
  ev->add_option("--checkpoint", paths.checkpoint, "trained checkpoint")->required();
  ev->add_option("--out", paths.out, "metrics report (JSON)");
  common(ev);
  eval_flags.add(ev, {&kEvalKeys});

  auto* ab = app.add_subcommand("ablate", "Train and evaluate all four objectives");
  ab->add_option("--kb", paths.kb, "KB triples (TSV)")->required();
  ab->add_option("--data", paths.data, "training questions (JSONL)")->required();
  ab->add_option("--dev", paths.dev, "dev questions (JSONL)");
  ab->add_option("--eval-data", paths.eval_data, "evaluation questions (JSONL)")->required();
  ab->add_option("--out", paths.out, "comparison table (JSON)");
  common(ab);
  ablate_flags.add(ab, {&kTrainingKeys, &kEvalKeys});

  auto* in = app.add_subcommand("inspect-paths", "Show the ranked reasoning paths for one question");
  in->add_option("--kb", paths.kb, "KB triples (TSV)")->required();
  in->add_option("--checkpoint", paths.checkpoint, "trained checkpoint")->required();
  in->add_option("--question", paths.question, "question text")->required();
  in->add_option("--topic", paths.topic, "topic entity name")->required();
  common(in);
  inspect_flags.add(in, {&kEvalKeys});

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(paths, gen_flags, out);
    if (tr->parsed()) return cmd_train(paths, train_flags, out, err);
    if (pr->parsed()) return cmd_predict(paths, predict_flags, out, err);
    if (ev->parsed()) return cmd_eval(paths, eval_flags, out, err);
    if (ab->parsed()) return cmd_ablate(paths, ablate_flags, out, err);
    if (in->parsed()) return cmd_inspect(paths, inspect_flags, out);
  } catch (const FileError& e) {
    err << "error: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadConfig;
  } catch (const DimensionMismatch& e) {
    err << "error: " << e.what() << '\n';
    return kExitDimensionMismatch;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadData;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadData;
  } catch (const TrainingError& e) {
    err << "error: training failed: " << e.what() << '\n';
    return kExitTrainingFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace kbqa
