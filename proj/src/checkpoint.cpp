#include "kbqa/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "kbqa/errors.hpp"

namespace kbqa {

namespace {

constexpr std::array<char, 8> kMagic{'K', 'B', 'Q', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

void put_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw FileError("truncated checkpoint");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get<std::uint64_t>(in)); }

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw FileError("truncated checkpoint");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& d = ckpt.params.dims;
  out.write(kMagic.data(), kMagic.size());
  put(out, kVersion);
  for (std::size_t v : {d.word_dim, d.entity_dim, d.relation_dim, d.hidden_dim, d.word_count, d.entity_count,
                        d.relation_count}) {
    put(out, static_cast<std::uint64_t>(v));
  }
  put(out, ckpt.seed);
  std::uint32_t count = 0;
  ckpt.params.visit([&](std::string_view, const Matrix&) { ++count; });
  put(out, count);
  ckpt.params.visit([&](std::string_view name, const Matrix& m) {
    put_string(out, std::string(name));
    put(out, static_cast<std::uint64_t>(m.rows()));
    put(out, static_cast<std::uint64_t>(m.cols()));
    for (double v : m.values()) put_f64(out, v);
  });
  put(out, static_cast<std::uint64_t>(ckpt.vocab.size()));
  for (const auto& w : ckpt.vocab.words()) put_string(out, w);
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FileError("not a checkpoint file");
  if (get<std::uint32_t>(in) != kVersion) throw FileError("unsupported checkpoint version");
  ModelDims d;
  d.word_dim = get<std::uint64_t>(in);
  d.entity_dim = get<std::uint64_t>(in);
  d.relation_dim = get<std::uint64_t>(in);
  d.hidden_dim = get<std::uint64_t>(in);
  d.word_count = get<std::uint64_t>(in);
  d.entity_count = get<std::uint64_t>(in);
  d.relation_count = get<std::uint64_t>(in);

  Checkpoint ckpt;
  try {
    ckpt.params = ModelParams::zeros(d);
  } catch (const std::invalid_argument& e) {
    throw FileError(std::string("checkpoint has invalid dimensions: ") + e.what());
  }
  ckpt.seed = get<std::uint64_t>(in);
  std::uint32_t expected = 0;
  ckpt.params.visit([&](std::string_view, const Matrix&) { ++expected; });
  if (get<std::uint32_t>(in) != expected) throw FileError("checkpoint tensor count mismatch");
  ckpt.params.visit([&](std::string_view name, Matrix& m) {
    if (get_string(in) != name) throw FileError("checkpoint tensor order mismatch at " + std::string(name));
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (rows != m.rows() || cols != m.cols()) throw FileError("checkpoint tensor shape mismatch at " + std::string(name));
    for (double& v : m.values()) v = get_f64(in);
  });
  const auto n_words = get<std::uint64_t>(in);
  if (n_words != d.word_count) throw FileError("checkpoint vocabulary size does not match word_count");
  Vocabulary vocab;
  for (std::uint64_t i = 0; i < n_words; ++i) {
    const auto w = get_string(in);
    if (i == 0) {
      if (w != "<unk>") throw FileError("checkpoint vocabulary must start with <unk>");
      continue;
    }
    vocab.add(w);
  }
  if (vocab.size() != n_words) throw FileError("checkpoint vocabulary has duplicate words");
  ckpt.vocab = std::move(vocab);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw FileError("cannot write checkpoint " + file.string());
  write_checkpoint(out, ckpt);
  if (!out) throw FileError("failed writing checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FileError("cannot open checkpoint " + file.string());
  return read_checkpoint(in);
}

}  // namespace kbqa
