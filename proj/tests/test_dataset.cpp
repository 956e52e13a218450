#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "kbqa/dataset.hpp"
#include "kbqa/errors.hpp"

using namespace kbqa;
using namespace kbqa::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kbqa_test_dataset_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

// Question count per brute-force path count class, over every gold answer.
bool brute_multipath(const KnowledgeBase& kb, const QAInstance& inst, int max_hops) {
  for (auto y : inst.gold_answers) {
    if (brute_force_paths(kb, inst.topic, y, max_hops).size() >= 2) return true;
  }
  return false;
}

SyntheticSpec small_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.entity_count = 60;
  s.relation_count = 6;
  s.type_count = 3;
  s.train_size = 40;
  s.dev_size = 10;
  s.test_size = 10;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("loading a well-formed file") {
  auto t = toy_kb();
  std::istringstream in(
      "{\"question\": \"where does a go\", \"topic_entity\": \"a\", \"answers\": [\"d\"]}\n"
      "\n"
      "{\"question\": \"what does a reach by r\", \"topic_entity\": \"a\", \"answers\": [\"b\", \"c\"],"
      " \"path\": [\"a\", \"r\"]}\n"
      "{\"question\": \"B then s\", \"topic_entity\": \"b\", \"answers\": [\"d\"], \"path\": [\"b\", \"s\"]}\n");
  Vocabulary vocab;
  const auto report = read_dataset(in, t.kb, vocab, true);
  CHECK(report.problems.empty());
  REQUIRE(report.instances.size() == 3);
  const auto& second = report.instances[1];
  CHECK(second.question_id == 3);
  CHECK(second.topic == t.a);
  CHECK(second.gold_answers == std::vector<EntityId>{t.b, t.c});
  CHECK(second.answers == second.gold_answers);
  REQUIRE(second.annotated_path.has_value());
  CHECK(*second.annotated_path == make_path({t.a}, {t.r}));
  CHECK(report.instances[2].question.front() == vocab.lookup("b"));
  CHECK(vocab.lookup("where") != Vocabulary::kUnknown);
}

TEST_CASE("bad lines are skipped and reported with their line number") {
  auto t = toy_kb();
  std::istringstream in(
      "{\"question\": \"ok\", \"topic_entity\": \"a\", \"answers\": [\"d\"]}\n"
      "{\"question\": \"unknown answer\", \"topic_entity\": \"a\", \"answers\": [\"zzz\"]}\n"
      "not json\n"
      "{\"question\": \"bad path\", \"topic_entity\": \"a\", \"answers\": [\"d\"], \"path\": [\"a\", \"s\"]}\n"
      "{\"question\": \"no answers\", \"topic_entity\": \"a\", \"answers\": []}\n"
      "{\"question\": \"unknown topic\", \"topic_entity\": \"q\", \"answers\": [\"d\"]}\n");
  Vocabulary vocab;
  const auto report = read_dataset(in, t.kb, vocab, true, "f.jsonl");
  CHECK(report.instances.size() == 1);
  REQUIRE(report.problems.size() == 5);
  CHECK(report.problems[0].rfind("f.jsonl:2:", 0) == 0);
  CHECK(report.problems[1].rfind("f.jsonl:3:", 0) == 0);
  CHECK(report.problems[4].rfind("f.jsonl:6:", 0) == 0);
}

TEST_CASE("save and load round trip") {
  auto t = toy_kb();
  QAInstance inst;
  inst.question_id = 1;
  inst.text = "what does a reach";
  inst.topic = t.a;
  inst.gold_answers = inst.answers = {t.b, t.c};
  inst.annotated_path = make_path({t.a}, {t.r});
  QAInstance plain = inst;
  plain.question_id = 2;
  plain.text = "where does a end up";
  plain.gold_answers = plain.answers = {t.d};
  plain.annotated_path.reset();

  std::ostringstream out;
  write_dataset(out, t.kb, {inst, plain});
  std::istringstream in(out.str());
  Vocabulary vocab;
  const auto back = read_dataset(in, t.kb, vocab, true).instances;
  REQUIRE(back.size() == 2);
  CHECK(back[0].text == inst.text);
  CHECK(back[0].topic == inst.topic);
  CHECK(back[0].gold_answers == inst.gold_answers);
  CHECK(back[0].annotated_path == inst.annotated_path);
  CHECK(back[1].text == plain.text);
  CHECK_FALSE(back[1].annotated_path.has_value());

  // Expanded copies share a question id and are written once.
  std::ostringstream again;
  write_dataset(again, t.kb, expand_multi_answer({inst}));
  const std::string written = again.str();
  CHECK(std::count(written.begin(), written.end(), '\n') == 1);
}

TEST_CASE("multi-answer expansion") {
  auto t = toy_kb();
  QAInstance one;
  one.text = "x";
  one.topic = t.a;
  one.gold_answers = one.answers = {t.d};
  QAInstance three = one;
  three.gold_answers = three.answers = {t.b, t.c, t.d};

  const auto single = expand_multi_answer({one});
  REQUIRE(single.size() == 1);
  CHECK(single[0].answers == one.answers);

  const auto expanded = expand_multi_answer({one, three});
  REQUIRE(expanded.size() == 4);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(expanded[i].answers.size() == 1);
    CHECK(expanded[i].gold_answers.size() == 3);
  }
  CHECK(expanded[1].answers[0] == t.b);
  CHECK(expanded[3].answers[0] == t.d);
}

TEST_CASE("multipath fraction") {
  auto t = toy_kb();
  QAInstance to_d;
  to_d.topic = t.a;
  to_d.gold_answers = to_d.answers = {t.d};
  QAInstance to_b = to_d;
  to_b.gold_answers = to_b.answers = {t.b};
  CHECK(has_multiple_paths(t.kb, to_d, 3));
  CHECK_FALSE(has_multiple_paths(t.kb, to_b, 3));
  CHECK(count_multipath_fraction({to_d, to_b}, t.kb, 3) == doctest::Approx(0.5));
  CHECK(count_multipath_fraction({}, t.kb, 3) == 0.0);

  KnowledgeBase chain;
  const auto x = chain.intern_entity("x"), y = chain.intern_entity("y"), z = chain.intern_entity("z");
  const auto r = chain.intern_relation("r");
  chain.add_fact(x, r, y);
  chain.add_fact(y, r, z);
  QAInstance q;
  q.topic = x;
  q.gold_answers = q.answers = {z};
  CHECK(count_multipath_fraction({q}, chain, 3) == 0.0);
}

TEST_CASE("generated questions are sound and splits are disjoint") {
  for (std::uint64_t seed : {1u, 2u}) {
    auto spec = small_spec(seed);
    spec.hop_mix = {0.2, 0.5, 0.3};
    const auto corpus = generate_synthetic(spec);
    CHECK(corpus.train.size() == 40);
    CHECK(corpus.dev.size() == 10);
    CHECK(corpus.test.size() == 10);
    std::set<std::string> seen;
    for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
      std::set<std::string> texts;
      for (const auto& inst : *split) {
        texts.insert(inst.text);
        REQUIRE(inst.annotated_path.has_value());
        const auto hops = inst.annotated_path->hops();
        for (auto y : inst.gold_answers) {
          const auto paths = brute_force_paths(corpus.kb, inst.topic, y, spec.max_hops);
          const bool has_intended = std::any_of(paths.begin(), paths.end(),
                                                [&](const ReasoningPath& p) { return p.hops() == hops; });
          CHECK(has_intended);
        }
        CHECK(static_cast<int>(inst.gold_answers.size()) <= spec.max_answers);
      }
      for (const auto& text : texts) CHECK(seen.insert(text).second);
    }
  }
}

TEST_CASE("hop mix with only 2-hop questions") {
  const auto corpus = generate_synthetic(small_spec(3));
  for (const auto& inst : corpus.train) CHECK(inst.annotated_path->hops() == 2);
}

TEST_CASE("multipath rate 0 gives exactly one path per answer") {
  auto spec = small_spec(4);
  spec.multipath_rate = 0.0;
  spec.hop_mix = {0.0, 0.5, 0.5};
  const auto corpus = generate_synthetic(spec);
  for (const auto& inst : corpus.test) {
    for (auto y : inst.gold_answers) CHECK(brute_force_paths(corpus.kb, inst.topic, y, spec.max_hops).size() == 1);
  }
}

TEST_CASE("realized multipath fraction tracks the requested rate") {
  for (double rate : {0.3, 0.5}) {
    SyntheticSpec spec;
    spec.multipath_rate = rate;
    spec.seed = 7;
    const auto corpus = generate_synthetic(spec);
    std::vector<QAInstance> all = corpus.train;
    all.insert(all.end(), corpus.dev.begin(), corpus.dev.end());
    all.insert(all.end(), corpus.test.begin(), corpus.test.end());
    std::size_t multi = 0;
    for (const auto& inst : all) multi += brute_multipath(corpus.kb, inst, spec.max_hops) ? 1 : 0;
    const double fraction = static_cast<double>(multi) / static_cast<double>(all.size());
    CHECK(std::abs(fraction - rate) <= 0.1);
    CHECK(count_multipath_fraction(all, corpus.kb, spec.max_hops) == doctest::Approx(fraction));
  }
}

TEST_CASE("injected routes give some questions several paths") {
  SyntheticSpec spec;
  spec.multipath_rate = 0.5;
  spec.hop_mix = {0.0, 0.5, 0.5};
  spec.max_alternative_routes = 3;
  const auto corpus = generate_synthetic(spec);
  std::size_t most = 0;
  for (const auto& inst : corpus.train) {
    for (auto y : inst.gold_answers) most = std::max(most, brute_force_paths(corpus.kb, inst.topic, y, 3).size());
  }
  CHECK(most >= 3);

  spec.max_alternative_routes = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("identical specs write identical files") {
  const auto spec = small_spec(5);
  const auto a = scratch_dir("a"), b = scratch_dir("b");
  write_corpus(a, generate_synthetic(spec), spec);
  write_corpus(b, generate_synthetic(spec), spec);
  for (const char* name : {"kb.tsv", "train.jsonl", "dev.jsonl", "test.jsonl", "spec.json"}) {
    CHECK(slurp(a / name) == slurp(b / name));
    CHECK_FALSE(slurp(a / name).empty());
  }
  auto other = spec;
  other.seed = 6;
  const auto c = scratch_dir("c");
  write_corpus(c, generate_synthetic(other), other);
  CHECK(slurp(a / "train.jsonl") != slurp(c / "train.jsonl"));

  // The written files load back against the written KB.
  const auto kb = load_kb(a / "kb.tsv");
  Vocabulary vocab;
  const auto loaded = load_dataset(a / "train.jsonl", kb, vocab, true);
  CHECK(loaded.problems.empty());
  CHECK(loaded.instances.size() == 40);
  for (const auto& dir : {a, b, c}) std::filesystem::remove_all(dir);
}

TEST_CASE("invalid and infeasible specs") {
  auto bad_mix = small_spec(1);
  bad_mix.hop_mix = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(generate_synthetic(bad_mix), std::invalid_argument);

  auto no_entities = small_spec(1);
  no_entities.entity_count = 0;
  CHECK_THROWS_AS(generate_synthetic(no_entities), std::invalid_argument);

  // One relation and one type: no alternative 1-hop route can be injected.
  SyntheticSpec tight;
  tight.entity_count = 10;
  tight.relation_count = 1;
  tight.type_count = 1;
  tight.min_branching = tight.max_branching = 1;
  tight.hop_mix = {1.0, 0.0, 0.0};
  tight.multipath_rate = 1.0;
  tight.max_hops = 1;
  tight.train_size = 5;
  tight.dev_size = tight.test_size = 0;
  CHECK_THROWS_AS(generate_synthetic(tight), std::runtime_error);
}

TEST_CASE("vocabulary threshold maps rare words to unk") {
  const std::vector<std::string> texts{"the cat of x1", "the dog of x2", "the cat"};
  const auto vocab = build_vocabulary(texts, 2);
  CHECK(vocab.size() == 4);  // <unk>, the, cat, of
  CHECK(vocab.lookup("x1") == Vocabulary::kUnknown);
  CHECK(vocab.lookup("dog") == Vocabulary::kUnknown);
  CHECK(vocab.word(WordId{1}) == "the");
  CHECK(build_vocabulary(texts, 1).size() == 7);
}
