#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace compscore {

// One token occurrence: byte span into the source text plus the index of the
// whitespace-delimited word the span belongs to (the word containing the
// span's last non-whitespace byte; pure-whitespace spans inherit the
// preceding word, 0 before any word).
struct TokenSpan {
  std::int32_t token_id = 0;
  std::int32_t char_start = 0;
  std::int32_t char_end = 0;
  std::int32_t word_index = 0;
};

// Byte range of one whitespace-delimited word.
struct WordSpan {
  std::int32_t start = 0;
  std::int32_t end = 0;
};

std::vector<WordSpan> split_words(std::string_view text);

// Flat vocabulary with greedy longest-match segmentation. Ids 0..255 are the
// reserved byte-fallback tokens <0x00>..<0xFF>, so any UTF-8 input is
// tokenizable; ids >= 256 match literally.
class Vocabulary {
 public:
  // Builds from literal token strings; byte-fallback ids are prepended.
  static Vocabulary from_tokens(std::vector<std::string> literal_tokens);

  // Reads vocab.txt: one token per line, first 256 lines must be the
  // reserved byte tokens.
  static Vocabulary from_file(const std::filesystem::path& path);

  void write_file(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }

  // Display form ("<0x41>" for byte tokens, the literal string otherwise).
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  // Raw bytes the token contributes to decoded text.
  std::string decode_token(int id) const;

  std::vector<TokenSpan> tokenize(std::string_view text) const;

  std::string decode(std::span<const std::int32_t> ids) const;

 private:
  Vocabulary() = default;

  std::vector<std::string> tokens_;                       // id -> display string
  std::unordered_map<std::string, std::int32_t> literal_; // literal string -> id (ids >= 256)
  std::size_t max_literal_len_ = 0;
};

}  // namespace compscore
