#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "kbqa/dataset.hpp"
#include "kbqa/eval.hpp"
#include "kbqa/training.hpp"

namespace kbqa {

// Everything a command can be configured with. Keys are the field names;
// max_hops and seed are shared by all three parts.
struct Settings {
  TrainingConfig training;
  SyntheticSpec synthetic;
  EvalOptions eval;
};

// Throws ConfigError for an unknown key or a value that does not parse.
void apply_setting(Settings& settings, std::string_view key, std::string_view value);

struct SettingKey {
  std::string name;
  bool is_flag;  // boolean switch on the command line
};
const std::vector<SettingKey>& setting_keys();

// "key = value" lines; '#' starts a comment.
void read_settings(std::istream& in, Settings& settings, const std::string& source = "<stream>");
void load_settings(const std::filesystem::path& file, Settings& settings);

}  // namespace kbqa
