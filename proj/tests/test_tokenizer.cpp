#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "compscore/csv.hpp"
#include "compscore/tokenizer.hpp"

#include <filesystem>
#include <random>

using namespace compscore;

TEST_CASE("greedy matcher prefers the longest token") {
  const auto v = Vocabulary::from_tokens({"ab", "a", "b"});
  const auto spans = v.tokenize("ab");
  REQUIRE(spans.size() == 1);
  CHECK(v.token(spans[0].token_id) == "ab");
}

TEST_CASE("single-char tokens segment with word indices") {
  const auto v = Vocabulary::from_tokens({"a", "b"});
  const auto spans = v.tokenize("ab");
  REQUIRE(spans.size() == 2);
  CHECK(v.token(spans[0].token_id) == "a");
  CHECK(v.token(spans[1].token_id) == "b");
  CHECK(spans[0].word_index == 0);
  CHECK(spans[1].word_index == 0);
}

TEST_CASE("milk pudding word alignment") {
  // hand-simulated greedy match: "milk" [0,4), " pud" [4,8), "ding" [8,12)
  // word of each span's last byte: 0, 1, 1
  const auto v = Vocabulary::from_tokens({"milk", " pud", "ding"});
  const auto spans = v.tokenize("milk pudding");
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].char_start == 0);
  CHECK(spans[0].char_end == 4);
  CHECK(spans[1].char_start == 4);
  CHECK(spans[1].char_end == 8);
  CHECK(spans[2].char_end == 12);
  CHECK(spans[0].word_index == 0);
  CHECK(spans[1].word_index == 1);
  CHECK(spans[2].word_index == 1);
}

TEST_CASE("byte fallback covers text with no literal match") {
  const auto v = Vocabulary::from_tokens({"zzz"});
  const auto spans = v.tokenize("hi");
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].token_id == static_cast<int>('h'));
  CHECK(spans[1].token_id == static_cast<int>('i'));
}

TEST_CASE("round trip reproduces arbitrary utf-8 and binary-ish text") {
  const auto v = Vocabulary::from_tokens({"the", " the", "ing", "caf\xc3\xa9"});
  std::mt19937_64 rng(123);
  const std::string alphabet = "the cat caf\xc3\xa9 ing\tx\n";
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const int len = static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) text += alphabet[rng() % alphabet.size()];
    const auto spans = v.tokenize(text);
    std::vector<std::int32_t> ids;
    std::size_t covered = 0;
    for (const auto& s : spans) {
      CHECK(s.char_start == static_cast<std::int32_t>(covered));
      covered = static_cast<std::size_t>(s.char_end);
      ids.push_back(s.token_id);
    }
    CHECK(covered == text.size());
    CHECK(v.decode(ids) == text);
  }
}

TEST_CASE("pure whitespace spans inherit the preceding word") {
  const auto v = Vocabulary::from_tokens({"a", " "});
  const auto spans = v.tokenize("a a");
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].word_index == 0);
  CHECK(spans[1].word_index == 0);  // the space between the words
  CHECK(spans[2].word_index == 1);
}

TEST_CASE("vocab file round trip and validation") {
  const auto dir = std::filesystem::temp_directory_path() / "compscore_vocab_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "vocab.txt";

  const auto v = Vocabulary::from_tokens({"hello", " wor", "ld"});
  v.write_file(path);
  const auto loaded = Vocabulary::from_file(path);
  CHECK(loaded.size() == v.size());
  const auto spans = loaded.tokenize("hello world");
  REQUIRE(spans.size() == 3);
  CHECK(loaded.token(spans[2].token_id) == "ld");

  // corrupt a reserved byte line
  auto lines = read_lines(path.string());
  lines[5] = "oops";
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text_file(path.string(), text);
  CHECK_THROWS_AS(Vocabulary::from_file(path), ValidationError);
}

TEST_CASE("duplicate and empty tokens are rejected") {
  CHECK_THROWS_AS(Vocabulary::from_tokens({"x", "x"}), ValidationError);
  CHECK_THROWS_AS(Vocabulary::from_tokens({""}), ValidationError);
}

TEST_CASE("split_words finds maximal non-whitespace runs") {
  const auto words = split_words("  milk  pudding\t now ");
  REQUIRE(words.size() == 3);
  CHECK(words[0].start == 2);
  CHECK(words[0].end == 6);
  CHECK(words[2].end == 20);
}
