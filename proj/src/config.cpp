#include "kbqa/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "kbqa/errors.hpp"

namespace kbqa {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, value);
  return out;
}

// from_chars for double is not in libstdc++ 11.
template <>
double parse_number<double>(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  std::istringstream in(v);
  in.imbue(std::locale::classic());
  double out = 0.0;
  in >> out;
  if (v.empty() || !in || in.peek() != std::char_traits<char>::eof()) bad_value(key, value);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, value);
}

using Setter = std::function<void(Settings&, std::string_view, std::string_view)>;

template <class T, class Get>
Setter number(Get get) {
  return [get](Settings& s, std::string_view k, std::string_view v) { get(s) = parse_number<T>(k, v); };
}

struct Entry {
  Setter set;
  bool is_flag = false;
};

const std::map<std::string, Entry, std::less<>>& table() {
  static const std::map<std::string, Entry, std::less<>> entries = [] {
    std::map<std::string, Entry, std::less<>> t;
    t["max_hops"] = {[](Settings& s, std::string_view k, std::string_view v) {
      const int h = parse_number<int>(k, v);
      s.training.max_hops = h;
      s.synthetic.max_hops = h;
      s.eval.predict.max_hops = h;
    }};
    t["seed"] = {[](Settings& s, std::string_view k, std::string_view v) {
      const auto seed = parse_number<std::uint64_t>(k, v);
      s.training.seed = seed;
      s.synthetic.seed = seed;
    }};
    t["k1_base"] = {number<std::size_t>([](Settings& s) -> auto& { return s.training.k1_base; })};
    t["k2_fraction"] = {number<double>([](Settings& s) -> auto& { return s.training.k2_fraction; })};
    t["learning_rate"] = {number<double>([](Settings& s) -> auto& { return s.training.learning_rate; })};
    t["batch_size"] = {number<std::size_t>([](Settings& s) -> auto& { return s.training.batch_size; })};
    t["epochs"] = {number<int>([](Settings& s) -> auto& { return s.training.epochs; })};
    t["objective"] = {[](Settings& s, std::string_view k, std::string_view v) {
      const auto o = parse_objective(trim(v));
      if (!o) bad_value(k, v);
      s.training.objective = *o;
    }};
    t["clip_norm"] = {number<double>([](Settings& s) -> auto& { return s.training.clip_norm; })};
    t["weight_decay"] = {number<double>([](Settings& s) -> auto& { return s.training.weight_decay; })};
    t["warm_start"] = {[](Settings& s, std::string_view k, std::string_view v) { s.training.warm_start = parse_bool(k, v); },
                       true};
    t["train_entity_embeddings"] = {[](Settings& s, std::string_view k, std::string_view v) {
                                      s.training.train_entity_embeddings = parse_bool(k, v);
                                    },
                                    true};
    t["min_word_count"] = {number<std::size_t>([](Settings& s) -> auto& { return s.training.min_word_count; })};
    t["word_dim"] = {number<std::size_t>([](Settings& s) -> auto& { return s.training.word_dim; })};
    t["entity_dim"] = {number<std::size_t>([](Settings& s) -> auto& { return s.training.entity_dim; })};
    t["hidden_dim"] = {number<std::size_t>([](Settings& s) -> auto& { return s.training.hidden_dim; })};

    t["entity_count"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.entity_count; })};
    t["relation_count"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.relation_count; })};
    t["type_count"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.type_count; })};
    t["min_branching"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.min_branching; })};
    t["max_branching"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.max_branching; })};
    t["multi_tail_prob"] = {number<double>([](Settings& s) -> auto& { return s.synthetic.multi_tail_prob; })};
    t["hop_mix"] = {[](Settings& s, std::string_view k, std::string_view v) {
      std::string text(v);
      for (char& c : text) {
        if (c == ',') c = ' ';
      }
      std::istringstream in(text);
      std::array<double, 3> mix{};
      std::string part;
      std::size_t n = 0;
      while (in >> part) {
        if (n == 3) bad_value(k, v);
        mix[n++] = parse_number<double>(k, part);
      }
      if (n != 3) bad_value(k, v);
      s.synthetic.hop_mix = mix;
    }};
    t["multipath_rate"] = {number<double>([](Settings& s) -> auto& { return s.synthetic.multipath_rate; })};
    t["max_alternative_routes"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.max_alternative_routes; })};
    t["synonyms_per_relation"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.synonyms_per_relation; })};
    t["max_answers"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.max_answers; })};
    t["train_size"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.train_size; })};
    t["dev_size"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.dev_size; })};
    t["test_size"] = {number<int>([](Settings& s) -> auto& { return s.synthetic.test_size; })};

    t["beam_width"] = {number<int>([](Settings& s) -> auto& { return s.eval.predict.beam_width; })};
    t["use_pmi"] = {[](Settings& s, std::string_view k, std::string_view v) { s.eval.predict.use_pmi = parse_bool(k, v); },
                    true};
    t["tau"] = {number<double>([](Settings& s) -> auto& { return s.eval.tau; })};
    return t;
  }();
  return entries;
}

}  // namespace

void apply_setting(Settings& settings, std::string_view key, std::string_view value) {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError("unknown setting '" + std::string(key) + "'");
  it->second.set(settings, key, value);
}

const std::vector<SettingKey>& setting_keys() {
  static const std::vector<SettingKey> keys = [] {
    std::vector<SettingKey> out;
    for (const auto& [name, entry] : table()) out.push_back({name, entry.is_flag});
    return out;
  }();
  return keys;
}

void read_settings(std::istream& in, Settings& settings, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      apply_setting(settings, trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_settings(const std::filesystem::path& file, Settings& settings) {
  std::ifstream in(file);
  if (!in) throw FileError("cannot open config " + file.string());
  read_settings(in, settings, file.string());
}

}  // namespace kbqa
