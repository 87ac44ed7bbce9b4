#include "rankclust/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <fmt/format.h>


#include "rankclust/error.hpp"

namespace rankclust {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError(fmt::format("error reading {}", path.string()));
  return bytes;
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(fmt::format("error writing {}", path.string()));
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<Token> load_tokens(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

CorpusSplit split_corpus(std::span<const Token> tokens, double heldout_fraction) {
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
    throw InvalidInput("held-out fraction must be in (0, 1)");
  }
  const auto heldout = static_cast<std::size_t>(std::floor(static_cast<double>(tokens.size()) * heldout_fraction));
  if (heldout < 2 || tokens.size() - heldout < 2) {
    throw DataError(fmt::format("corpus of {} tokens is too short to split", tokens.size()));
  }
  const std::size_t cut = tokens.size() - heldout;
  return {{tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(cut)},
          {tokens.begin() + static_cast<std::ptrdiff_t>(cut), tokens.end()}};
}

CorpusSplit load_corpus(const std::filesystem::path& path) { return split_corpus(load_tokens(path)); }

std::span<const Token> eval_slice(const CorpusSplit& corpus, std::size_t max_tokens) {
  std::span<const Token> s = corpus.heldout;
  if (max_tokens > 0 && max_tokens < s.size()) s = s.first(max_tokens);
  return s;
}

}  // namespace rankclust
