#include "compscore/tokenizer.hpp"

#include "compscore/csv.hpp"

#include <cctype>
#include <cstdio>

namespace compscore {

namespace {

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string byte_token_name(int byte) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "<0x%02X>", byte);
  return std::string(buf);
}

}  // namespace

std::vector<WordSpan> split_words(std::string_view text) {
  std::vector<WordSpan> words;
  std::int32_t i = 0;
  const auto n = static_cast<std::int32_t>(text.size());
  while (i < n) {
    while (i < n && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    const std::int32_t start = i;
    while (i < n && !is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    words.push_back({start, i});
  }
  return words;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> literal_tokens) {
  Vocabulary v;
  v.tokens_.reserve(256 + literal_tokens.size());
  for (int b = 0; b < 256; ++b) v.tokens_.push_back(byte_token_name(b));
  for (auto& tok : literal_tokens) {
    if (tok.empty()) throw ValidationError("vocabulary: empty token string");
    const auto id = static_cast<std::int32_t>(v.tokens_.size());
    if (!v.literal_.emplace(tok, id).second) {
      throw ValidationError("vocabulary: duplicate token '" + tok + "'");
    }
    v.max_literal_len_ = std::max(v.max_literal_len_, tok.size());
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

Vocabulary Vocabulary::from_file(const std::filesystem::path& path) {
  auto lines = read_lines(path.string());
  if (lines.size() < 256) {
    throw ValidationError("vocab file " + path.string() +
                          ": needs at least the 256 reserved byte tokens, got " +
                          std::to_string(lines.size()) + " lines");
  }
  for (int b = 0; b < 256; ++b) {
    if (lines[static_cast<std::size_t>(b)] != byte_token_name(b)) {
      throw ValidationError("vocab file " + path.string() + ": line " + std::to_string(b + 1) +
                            " must be the reserved byte token " + byte_token_name(b));
    }
  }
  std::vector<std::string> literals(lines.begin() + 256, lines.end());
  return from_tokens(std::move(literals));
}

void Vocabulary::write_file(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& tok : tokens_) {
    out += tok;
    out += '\n';
  }
  write_text_file(path.string(), out);
}

std::string Vocabulary::decode_token(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("decode: token id out of range");
  if (id < 256) return std::string(1, static_cast<char>(static_cast<unsigned char>(id)));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenSpan> Vocabulary::tokenize(std::string_view text) const {
  const auto words = split_words(text);
  // word index per byte; whitespace bytes get the preceding word (0 at start).
  std::vector<std::int32_t> word_of_byte(text.size(), 0);
  {
    std::vector<bool> in_word(text.size(), false);
    for (std::size_t w = 0; w < words.size(); ++w) {
      for (std::int32_t i = words[w].start; i < words[w].end; ++i) {
        word_of_byte[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(w);
        in_word[static_cast<std::size_t>(i)] = true;
      }
    }
    std::int32_t current = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (in_word[i]) {
        current = word_of_byte[i];
      } else {
        word_of_byte[i] = current;
      }
    }
  }

  std::vector<TokenSpan> spans;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::int32_t id = -1;
    std::size_t len = 0;
    const std::size_t cap = std::min(max_literal_len_, text.size() - pos);
    for (std::size_t l = cap; l >= 1; --l) {
      auto it = literal_.find(std::string(text.substr(pos, l)));
      if (it != literal_.end()) {
        id = it->second;
        len = l;
        break;
      }
    }
    if (id < 0) {
      id = static_cast<std::int32_t>(static_cast<unsigned char>(text[pos]));
      len = 1;
    }
    TokenSpan span;
    span.token_id = id;
    span.char_start = static_cast<std::int32_t>(pos);
    span.char_end = static_cast<std::int32_t>(pos + len);
    // word of the last non-whitespace byte in the span; whole-span whitespace
    // falls back to the byte map (preceding word).
    std::int32_t anchor = span.char_end - 1;
    while (anchor > span.char_start &&
           is_space_byte(static_cast<unsigned char>(text[static_cast<std::size_t>(anchor)]))) {
      --anchor;
    }
    span.word_index = word_of_byte[static_cast<std::size_t>(anchor)];
    spans.push_back(span);
    pos += len;
  }
  return spans;
}

std::string Vocabulary::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto id : ids) out += decode_token(id);
  return out;
}

}  // namespace compscore
