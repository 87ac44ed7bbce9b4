#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "rankclust/model.hpp"

namespace rankclust {

struct CorpusSplit {
  std::vector<Token> train;
  std::vector<Token> heldout;  // final tenth, never trained on
};

// Bytes of a file as byte-level tokens.
std::vector<Token> load_tokens(const std::filesystem::path& path);
CorpusSplit split_corpus(std::span<const Token> tokens, double heldout_fraction = 0.1);
CorpusSplit load_corpus(const std::filesystem::path& path);

// First `max_tokens` of the held-out slice (all of it when 0).
std::span<const Token> eval_slice(const CorpusSplit& corpus, std::size_t max_tokens);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace rankclust
