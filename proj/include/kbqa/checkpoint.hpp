#pragma once

// Checkpoint file layout (all integers unsigned little-endian, floats IEEE-754
// binary64 little-endian):
//
//   bytes 0..7   magic "KBQACKPT"
//   u32          format version (1)
//   u64 x 7      word_dim, entity_dim, relation_dim, hidden_dim,
//                word_count, entity_count, relation_count
//   u64          seed
//   u32          tensor count (18)
//   per tensor, in ModelParams::visit order:
//     u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 (row-major)
//   u64          vocabulary size
//   per word:    u32 length, UTF-8 bytes (word id = position)

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "kbqa/path_model.hpp"
#include "kbqa/vocab.hpp"

namespace kbqa {

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
  Vocabulary vocab;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace kbqa
