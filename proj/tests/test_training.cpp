#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "fixtures.hpp"
#include "kbqa/errors.hpp"
#include "kbqa/training.hpp"

using namespace kbqa;
using namespace kbqa::testing;

namespace {

QAInstance instance(EntityId topic, std::vector<EntityId> gold, std::vector<WordId> q = words({1, 2})) {
  QAInstance inst;
  inst.text = "q";
  inst.question = std::move(q);
  inst.topic = topic;
  inst.gold_answers = inst.answers = std::move(gold);
  return inst;
}

ModelParams scaled_params(const ModelDims& dims, std::uint64_t seed, double scale) {
  auto p = init_params(dims, seed);
  p.visit([&](std::string_view, Matrix& m) {
    for (double& v : m.values()) v *= scale;
  });
  return p;
}

// log p(y|p,q) + log p(p|q) computed from the path terms and a brute-force fanout count.
double oracle_weight(const ModelParams& params, const KnowledgeBase& kb, const std::vector<WordId>& q,
                     const ReasoningPath& path) {
  return brute_force_answer_log_prob(params, kb, q, {path});
}

std::vector<double> flat(const ModelParams& p) {
  std::vector<double> out;
  p.visit([&](std::string_view, const Matrix& m) { out.insert(out.end(), m.values().begin(), m.values().end()); });
  return out;
}

// Smaller synthetic corpus for end-to-end training tests.
SyntheticCorpus small_corpus(std::uint64_t seed, Vocabulary& vocab) {
  SyntheticSpec spec;
  spec.entity_count = 60;
  spec.relation_count = 6;
  spec.type_count = 3;
  spec.train_size = 40;
  spec.dev_size = 15;
  spec.test_size = 5;
  spec.seed = seed;
  auto corpus = generate_synthetic(spec);
  vocab = build_vocabulary(corpus.train, 2);
  for (auto* split : {&corpus.train, &corpus.dev, &corpus.test}) encode_questions(*split, vocab, false);
  return corpus;
}

}  // namespace

TEST_CASE("candidates on the toy KB") {
  auto t = toy_kb();
  TrainingConfig config;
  const auto cands = build_candidates(std::vector{instance(t.a, {t.d})}, t.kb, config);
  REQUIRE(cands.paths.size() == 1);
  CHECK(cands.paths[0] == brute_force_paths(t.kb, t.a, t.d, 3));
  CHECK(cands.paths[0].size() == 2);
  CHECK(cands.excluded == 0);
}

TEST_CASE("effective k1 grows with the gold set") {
  auto t = toy_kb();
  TrainingConfig config;
  CHECK(effective_k1(config, instance(t.a, {t.b, t.c, t.d})) == 18);
  CHECK(effective_k1(config, instance(t.a, {t.d})) == 16);
}

TEST_CASE("an instance whose only path fans out too far is excluded") {
  KnowledgeBase kb;
  const auto hub = kb.intern_entity("hub");
  const auto r = kb.intern_relation("r");
  std::vector<EntityId> spokes;
  for (int i = 0; i < 100; ++i) {
    spokes.push_back(kb.intern_entity("s" + std::to_string(i)));
    kb.add_fact(hub, r, spokes.back());
  }
  TrainingConfig config;
  const auto cands = build_candidates(std::vector{instance(hub, {spokes[3]})}, kb, config);
  CHECK(cands.paths[0].empty());
  CHECK(cands.excluded == 1);

  // train() counts it and leaves the parameters untouched.
  config.epochs = 2;
  const auto result = train(std::vector{instance(hub, {spokes[3]})}, kb, 3, config);
  CHECK(result.report.excluded_no_paths == 1);
  CHECK(result.params == init_params(result.params.dims, config.seed));
}

TEST_CASE("select_top_paths") {
  auto t = toy_kb();
  const auto zero = ModelParams::zeros(toy_dims(4, 3, 4, 2));
  const auto q = words({1});
  const auto both = brute_force_paths(t.kb, t.a, t.d, 3);

  // Equal probabilities: the tie goes to the lexicographically smaller path.
  const auto top = select_top_paths(zero, t.kb, q, both, 0.5);
  REQUIRE(top.size() == 1);
  CHECK(top[0] == make_path({t.a, t.b}, {t.r, t.s}));
  const std::vector<ReasoningPath> reversed{both[1], both[0]};
  CHECK(select_top_paths(zero, t.kb, q, reversed, 0.5) == top);

  CHECK(select_top_paths(zero, t.kb, q, std::vector{both[1]}, 0.01) == std::vector{both[1]});
  CHECK_THROWS_AS(select_top_paths(zero, t.kb, q, std::vector<ReasoningPath>{}, 0.5), std::invalid_argument);

  // Four scored paths, half kept.
  const std::vector<double> lps{-3.0, -1.0, -2.0, -4.0};
  const std::vector<ReasoningPath> four(4, both[0]);
  CHECK(select_top_indices(lps, four, 0.5) == std::vector<std::size_t>{1, 2});
  CHECK(select_top_indices(lps, four, 1.0).size() == 4);
  CHECK(select_top_indices(lps, four, 0.26).size() == 2);
}

TEST_CASE("selection is a permutation-invariant subset") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto kb = random_kb(seed, 20, 4);
    const auto params = init_params(toy_dims(6, 4, kb.entity_count(), kb.relation_count()), seed);
    const auto q = words({1, 3, 2});
    for (std::uint32_t y = 0; y < kb.entity_count(); ++y) {
      auto paths = enumerate_paths(kb, EntityId{0}, EntityId{y}, 3);
      if (paths.size() < 3) continue;
      const auto top = select_top_paths(params, kb, q, paths, 0.5);
      CHECK(top.size() == (paths.size() + 1) / 2);
      for (const auto& p : top) CHECK(std::find(paths.begin(), paths.end(), p) != paths.end());
      Rng rng(seed);
      rng.shuffle(paths);
      CHECK(select_top_paths(params, kb, q, paths, 0.5) == top);
      // Kept paths are at least as probable as every dropped one.
      double worst_kept = 0.0;
      for (const auto& p : top) worst_kept = std::min(worst_kept, path_log_prob(params, kb, q, p).total);
      for (const auto& p : paths) {
        if (std::find(top.begin(), top.end(), p) == top.end()) {
          CHECK(path_log_prob(params, kb, q, p).total <= worst_kept);
        }
      }
    }
  }
}

TEST_CASE("objective values on small examples") {
  auto t = toy_kb();
  const auto zero = ModelParams::zeros(toy_dims(4, 3, 4, 2));
  const auto q = words({1, 2});
  const auto both = brute_force_paths(t.kb, t.a, t.d, 3);

  // Uniform 3-way relation softmax: q0 = (1/3)^2 (relations) * 1/2 (entity) * 1/3 (stop) = 1/54.
  const TrainingExample two{q, t.d, both};
  CHECK(example_loss(zero, t.kb, two, ObjectiveVariant::multiple_marginal) ==
        doctest::Approx(-std::log(2.0 / 54.0)).epsilon(1e-13));
  CHECK(example_loss(zero, t.kb, two, ObjectiveVariant::multiple_product) ==
        doctest::Approx(-2.0 * std::log(1.0 / 54.0)).epsilon(1e-13));

  const auto params = init_params(toy_dims(4, 3, 4, 2), 9);
  const TrainingExample one{q, t.d, {both[0]}};
  CHECK(example_loss(params, t.kb, one, ObjectiveVariant::multiple_marginal) ==
        doctest::Approx(example_loss(params, t.kb, one, ObjectiveVariant::multiple_product)).epsilon(1e-14));
  CHECK(example_loss(params, t.kb, one, ObjectiveVariant::single_random) ==
        doctest::Approx(-oracle_weight(params, t.kb, q, both[0])).epsilon(1e-12));

  // 1-hop path to b: p(y|p) = 1/2 because (a, r) has two tails.
  const TrainingExample to_b{q, t.b, {make_path({t.a}, {t.r})}};
  CHECK(example_loss(zero, t.kb, to_b, ObjectiveVariant::single_ground_truth) ==
        doctest::Approx(-std::log(1.0 / 9.0 * 0.5)).epsilon(1e-13));

  CHECK_THROWS_AS(example_loss(zero, t.kb, two, ObjectiveVariant::single_random), std::invalid_argument);
  const TrainingExample wrong{q, t.c, {both[0]}};
  CHECK_THROWS_AS(example_loss(zero, t.kb, wrong, ObjectiveVariant::multiple_marginal), std::invalid_argument);

  CHECK(batch_loss(params, t.kb, std::vector{two, one}, ObjectiveVariant::multiple_marginal) ==
        doctest::Approx(example_loss(params, t.kb, two, ObjectiveVariant::multiple_marginal) +
                        example_loss(params, t.kb, one, ObjectiveVariant::multiple_marginal))
            .epsilon(1e-14));
}

TEST_CASE("Jensen bound between the marginal and product objectives") {
  Rng rng(2024);
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 1000; ++seed) {
    const auto kb = random_kb(seed, 15, 4);
    const auto params = scaled_params(toy_dims(4, 5, kb.entity_count(), kb.relation_count()), seed, 10.0);
    const EntityId e0{static_cast<std::uint32_t>(rng.index(kb.entity_count()))};
    const EntityId y{static_cast<std::uint32_t>(rng.index(kb.entity_count()))};
    const auto paths = enumerate_paths(kb, e0, y, 3);
    if (paths.empty()) continue;
    const TrainingExample ex{words({1, 2, 3}), y, paths};
    const double n = static_cast<double>(paths.size());

    // Independent weights from the brute-force oracle.
    std::vector<double> w;
    for (const auto& p : paths) w.push_back(oracle_weight(params, kb, ex.question, p));
    double sum = 0.0, mean_log = 0.0;
    for (double v : w) {
      CHECK(v <= 0.0);
      sum += std::exp(v);
      mean_log += v / n;
    }
    const double slack = 1e-9 * (1.0 + std::abs(mean_log));
    CHECK(std::log(sum) >= mean_log + std::log(n) - slack);

    const double marginal = example_loss(params, kb, ex, ObjectiveVariant::multiple_marginal);
    const double product = example_loss(params, kb, ex, ObjectiveVariant::multiple_product);
    CHECK(marginal <= product / n - std::log(n) + slack);
    CHECK(marginal <= product / n + std::log(n) + slack);
    CHECK(std::exp(-marginal) > 0.0);
    CHECK(std::exp(-marginal) <= 1.0);
    ++checked;
  }
}

TEST_CASE("batch gradient matches finite differences") {
  for (auto variant : {ObjectiveVariant::multiple_marginal, ObjectiveVariant::multiple_product}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto kb = random_kb(seed + 40, 10, 4);
      auto params = scaled_params(toy_dims(4, 5, kb.entity_count(), kb.relation_count()), seed, 8.0);
      std::vector<TrainingExample> batch;
      for (std::uint32_t y = 0; y < kb.entity_count() && batch.size() < 2; ++y) {
        auto paths = enumerate_paths(kb, EntityId{0}, EntityId{y}, 2);
        if (paths.empty()) continue;
        paths.resize(std::min<std::size_t>(paths.size(), 3));
        batch.push_back({words({1, 4, static_cast<std::uint32_t>(batch.size() + 2)}), EntityId{y}, paths});
      }
      REQUIRE_FALSE(batch.empty());
      ModelParams grad = ModelParams::zeros(params.dims);
      batch_loss_gradient(params, kb, batch, variant, grad);
      const auto g = flat(grad);
      std::vector<Matrix*> tensors;
      params.visit([&](std::string_view, Matrix& m) { tensors.push_back(&m); });
      std::size_t k = 0;
      double worst = 0.0;
      const double eps = 1e-4;
      for (Matrix* m : tensors) {
        for (double& v : m->values()) {
          const double saved = v;
          v = saved + eps;
          const double up = batch_loss(params, kb, batch, variant);
          v = saved - eps;
          const double down = batch_loss(params, kb, batch, variant);
          v = saved;
          const double fd = (up - down) / (2 * eps);
          worst = std::max(worst, std::abs(g[k] - fd) / std::max(1.0, std::abs(g[k])));
          ++k;
        }
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("two identical instances give exactly twice the gradient") {
  auto t = toy_kb();
  const auto params = init_params(toy_dims(4, 3, 4, 2), 5);
  const TrainingExample ex{words({1, 2}), t.d, brute_force_paths(t.kb, t.a, t.d, 3)};
  ModelParams once = ModelParams::zeros(params.dims), twice = ModelParams::zeros(params.dims);
  batch_loss_gradient(params, t.kb, std::vector{ex}, ObjectiveVariant::multiple_marginal, once);
  batch_loss_gradient(params, t.kb, std::vector{ex, ex}, ObjectiveVariant::multiple_marginal, twice);
  const auto a = flat(once), b = flat(twice);
  REQUIRE(a.size() == b.size());
  bool exact = true;
  for (std::size_t i = 0; i < a.size(); ++i) exact = exact && b[i] == 2.0 * a[i];
  CHECK(exact);
}

TEST_CASE("objective names") {
  for (auto v : {ObjectiveVariant::single_ground_truth, ObjectiveVariant::single_random,
                 ObjectiveVariant::multiple_product, ObjectiveVariant::multiple_marginal}) {
    CHECK(parse_objective(objective_name(v)) == v);
  }
  CHECK(parse_objective("multiple_marginal") == ObjectiveVariant::multiple_marginal);
  CHECK_FALSE(parse_objective("sum").has_value());
}

TEST_CASE("config validation") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate());
  c.k2_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.k2_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training runs") {
  Vocabulary vocab;
  const auto corpus = small_corpus(11, vocab);
  TrainingConfig config;
  config.hidden_dim = config.word_dim = config.entity_dim = 8;
  config.epochs = 0;
  const auto untouched = train(corpus.train, corpus.kb, vocab.size(), config);
  CHECK(untouched.params == init_params(untouched.params.dims, config.seed));
  CHECK(untouched.report.epochs.empty());

  config.epochs = 3;
  const auto a = train(corpus.train, corpus.kb, vocab.size(), config, corpus.dev);
  const auto b = train(corpus.train, corpus.kb, vocab.size(), config, corpus.dev);
  CHECK(a.params == b.params);
  CHECK(report_to_json(a.report) == report_to_json(b.report));
  CHECK(a.report.epochs.size() == 3);
  std::size_t expanded = 0;
  for (const auto& inst : corpus.train) expanded += inst.gold_answers.size();
  CHECK(a.report.instances == expanded);

  // Disabling re-selection changes what is learned.
  auto all_paths = config;
  all_paths.k2_fraction = 1.0;
  CHECK_FALSE(train(corpus.train, corpus.kb, vocab.size(), all_paths).params == a.params);

  // Every variant trains; the ground-truth variant uses the generator's annotations.
  for (auto v : {ObjectiveVariant::single_ground_truth, ObjectiveVariant::single_random,
                 ObjectiveVariant::multiple_product}) {
    auto c = config;
    c.objective = v;
    const auto r = train(corpus.train, corpus.kb, vocab.size(), c);
    CHECK(r.params.all_finite());
    CHECK_FALSE(r.params == a.params);
  }

  auto warm = config;
  warm.warm_start = true;
  CHECK_FALSE(train(corpus.train, corpus.kb, vocab.size(), warm).params == a.params);

  // Entity embeddings move only when asked to.
  const auto init = init_params(a.params.dims, config.seed);
  CHECK(a.params.entity_embedding == init.entity_embedding);
  auto trainable = config;
  trainable.train_entity_embeddings = true;
  CHECK_FALSE(train(corpus.train, corpus.kb, vocab.size(), trainable).params.entity_embedding ==
              init.entity_embedding);
}

TEST_CASE("ground-truth objective needs annotated paths") {
  auto t = toy_kb();
  TrainingConfig config;
  config.objective = ObjectiveVariant::single_ground_truth;
  config.epochs = 1;
  CHECK_THROWS_AS(train(std::vector{instance(t.a, {t.d})}, t.kb, 3, config), TrainingError);

  // An annotated path whose final set misses the answer is swapped for the
  // same relation sequence through another entity, or dropped if none exists.
  KnowledgeBase kb = t.kb;
  const auto e = kb.intern_entity("e");
  kb.add_fact(t.c, t.s, e);
  auto to_e = instance(t.a, {e});
  to_e.annotated_path = make_path({t.a, t.b}, {t.r, t.s});
  const auto swapped = train(std::vector{to_e}, kb, 3, config);
  CHECK(swapped.report.excluded_no_gt_path == 0);
  CHECK_FALSE(swapped.params == init_params(swapped.params.dims, config.seed));

  auto unreachable = instance(t.a, {e});
  unreachable.annotated_path = make_path({t.a}, {t.r});
  const auto dropped = train(std::vector{unreachable}, kb, 3, config);
  CHECK(dropped.report.excluded_no_gt_path == 1);
  CHECK(dropped.params == init_params(dropped.params.dims, config.seed));
}

TEST_CASE("a diverging run stops with a diagnostic") {
  Vocabulary vocab;
  const auto corpus = small_corpus(12, vocab);
  TrainingConfig config;
  config.hidden_dim = config.word_dim = config.entity_dim = 8;
  config.epochs = 5;
  config.learning_rate = 1e300;
  config.clip_norm = 1e300;
  CHECK_THROWS_AS(train(corpus.train, corpus.kb, vocab.size(), config), TrainingError);
}

TEST_CASE("dev loss falls over training on most seeds") {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Vocabulary vocab;
    const auto corpus = small_corpus(seed, vocab);
    TrainingConfig config;
    config.seed = seed;
    config.hidden_dim = config.word_dim = config.entity_dim = 16;
    config.epochs = 20;
    const auto r = train(corpus.train, corpus.kb, vocab.size(), config, corpus.dev);
    improved += r.report.epochs.back().dev_loss < r.report.epochs.front().dev_loss ? 1 : 0;
  }
  CHECK(improved >= 4);
}
