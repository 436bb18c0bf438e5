#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "compscore/controls.hpp"
#include "compscore/csv.hpp"
#include "compscore/parse_tree.hpp"
#include "test_util.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <random>

using namespace compscore;

namespace {

// --- explicit parser-step simulations, independent of the descendant rules ---

// Top-down: expand nonterminals from a prediction stack; each expansion is a
// step attributed to the next unscanned word.
std::vector<int> oracle_topdown(const ParseTree& tree) {
  std::vector<int> counts(static_cast<std::size_t>(tree.terminal_count()), 0);
  std::vector<const TreeNode*> stack = {&tree.root};
  int next_word = 0;
  while (!stack.empty()) {
    const TreeNode* top = stack.back();
    stack.pop_back();
    if (top->terminal) {
      ++next_word;
      continue;
    }
    counts[static_cast<std::size_t>(next_word)] += 1;  // prediction step
    for (auto it = top->children.rbegin(); it != top->children.rend(); ++it) {
      stack.push_back(&*it);
    }
  }
  return counts;
}

// Bottom-up: shift words, reduce whenever the top of the stack completes a
// node's child list; each reduction is a step attributed to the last shifted
// word.
std::vector<int> oracle_bottomup(const ParseTree& tree) {
  std::vector<int> counts(static_cast<std::size_t>(tree.terminal_count()), 0);
  // leaves in order, with parent pointers
  std::vector<const TreeNode*> leaves;
  std::function<void(const TreeNode&)> gather = [&](const TreeNode& n) {
    if (n.terminal) {
      leaves.push_back(&n);
      return;
    }
    for (const auto& c : n.children) gather(c);
  };
  gather(tree.root);

  std::map<const TreeNode*, const TreeNode*> parents;
  std::function<void(const TreeNode&)> link = [&](const TreeNode& n) {
    for (const auto& c : n.children) {
      parents[&c] = &n;
      link(c);
    }
  };
  link(tree.root);

  std::vector<const TreeNode*> stack;
  int word = -1;
  for (const TreeNode* leaf : leaves) {
    stack.push_back(leaf);
    ++word;
    // reduce greedily while the stack top matches some parent's children
    bool reduced = true;
    while (reduced) {
      reduced = false;
      if (stack.empty()) break;
      const TreeNode* candidate = parents.count(stack.back()) ? parents[stack.back()] : nullptr;
      if (candidate == nullptr) break;
      const std::size_t k = candidate->children.size();
      if (stack.size() < k) break;
      bool match = true;
      for (std::size_t i = 0; i < k; ++i) {
        if (stack[stack.size() - k + i] != &candidate->children[i]) {
          match = false;
          break;
        }
      }
      if (match) {
        stack.resize(stack.size() - k);
        stack.push_back(candidate);
        counts[static_cast<std::size_t>(word)] += 1;  // reduction step
        reduced = true;
      }
    }
  }
  return counts;
}

// Left-corner: a node is announced the moment its first child's subtree
// completes; completion propagates when last children complete.
std::vector<int> oracle_leftcorner(const ParseTree& tree) {
  std::vector<int> counts(static_cast<std::size_t>(tree.terminal_count()), 0);
  std::map<const TreeNode*, const TreeNode*> parents;
  std::function<void(const TreeNode&)> link = [&](const TreeNode& n) {
    for (const auto& c : n.children) {
      parents[&c] = &n;
      link(c);
    }
  };
  link(tree.root);
  std::vector<const TreeNode*> leaves;
  std::function<void(const TreeNode&)> gather = [&](const TreeNode& n) {
    if (n.terminal) {
      leaves.push_back(&n);
      return;
    }
    for (const auto& c : n.children) gather(c);
  };
  gather(tree.root);

  int word = -1;
  std::function<void(const TreeNode*)> complete = [&](const TreeNode* node) {
    const TreeNode* parent = parents.count(node) ? parents[node] : nullptr;
    if (parent == nullptr) return;
    if (node == &parent->children.front()) {
      counts[static_cast<std::size_t>(word)] += 1;  // announce the parent
    }
    if (node == &parent->children.back()) complete(parent);
  };
  for (const TreeNode* leaf : leaves) {
    ++word;
    complete(leaf);
  }
  return counts;
}

std::vector<int> oracle_counts(const ParseTree& tree, ParseStrategy strategy) {
  switch (strategy) {
    case ParseStrategy::topdown: return oracle_topdown(tree);
    case ParseStrategy::bottomup: return oracle_bottomup(tree);
    case ParseStrategy::leftcorner: return oracle_leftcorner(tree);
  }
  return {};
}

}  // namespace

TEST_CASE("bracketed parsing recovers structure") {
  const auto tree = parse_bracketed_line("(S (NP the dog) (VP barked))", 0);
  CHECK(tree.nonterminal_count() == 3);
  CHECK(tree.terminal_count() == 3);
  const auto words = tree.words();
  REQUIRE(words.size() == 3);
  CHECK(words[0] == "the");
  CHECK(words[1] == "dog");
  CHECK(words[2] == "barked");
}

TEST_CASE("unary chains count every nonterminal") {
  const auto tree = parse_bracketed_line("(A (B (C x)))", 0);
  CHECK(tree.nonterminal_count() == 3);
  CHECK(tree.terminal_count() == 1);
}

TEST_CASE("parse errors carry byte offsets") {
  try {
    parse_bracketed_line("(S (NP the", 0);
    FAIL("expected unbalanced error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("unbalanced") != std::string::npos);
    CHECK(msg.find("byte 10") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_bracketed_line("(S)", 0), ValidationError);
  CHECK_THROWS_AS(parse_bracketed_line("()", 0), ValidationError);
  CHECK_THROWS_AS(parse_bracketed_line("(S x) y", 0), ValidationError);
  CHECK_THROWS_AS(parse_bracketed_line("word", 0), ValidationError);
}

TEST_CASE("parse_bracketed reads one tree per non-blank line") {
  const auto trees = parse_bracketed("(S a)\n\n(S (A b c))\n");
  REQUIRE(trees.size() == 2);
  CHECK(trees[0].sentence_id == 0);
  CHECK(trees[1].sentence_id == 1);
  CHECK(trees[1].nonterminal_count() == 2);
}

TEST_CASE("node counts on the two-constituent example") {
  const auto tree = parse_bracketed_line("(S (NP the dog) (VP barked))", 0);
  const auto td = node_counts(tree, ParseStrategy::topdown);
  const auto bu = node_counts(tree, ParseStrategy::bottomup);
  const auto lc = node_counts(tree, ParseStrategy::leftcorner);
  CHECK(td == std::vector<int>{2, 0, 1});
  CHECK(bu == std::vector<int>{0, 1, 2});
  CHECK(lc == std::vector<int>{1, 1, 1});
  // the stack machines agree
  CHECK(oracle_topdown(tree) == td);
  CHECK(oracle_bottomup(tree) == bu);
  CHECK(oracle_leftcorner(tree) == lc);
}

TEST_CASE("every strategy distributes exactly the nonterminal count") {
  const auto tree = parse_bracketed_line("(S (NP the dog) (VP barked))", 0);
  for (auto strategy :
       {ParseStrategy::topdown, ParseStrategy::bottomup, ParseStrategy::leftcorner}) {
    const auto counts = node_counts(tree, strategy);
    int total = 0;
    for (int c : counts) total += c;
    CHECK(total == 3);
  }
}

TEST_CASE("descendant counting equals parser-step simulation on random trees") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tree = testutil::random_tree(rng, 12);
    const int n_nonterminals = tree.nonterminal_count();
    for (auto strategy :
         {ParseStrategy::topdown, ParseStrategy::bottomup, ParseStrategy::leftcorner}) {
      const auto got = node_counts(tree, strategy);
      CHECK(got == oracle_counts(tree, strategy));
      int total = 0;
      for (int c : got) total += c;
      CHECK(total == n_nonterminals);
    }
  }
}

TEST_CASE("single-terminal trees assign every node to the one word") {
  const auto tree = parse_bracketed_line("(A (B (C (D x))))", 0);
  for (auto strategy :
       {ParseStrategy::topdown, ParseStrategy::bottomup, ParseStrategy::leftcorner}) {
    const auto counts = node_counts(tree, strategy);
    REQUIRE(counts.size() == 1);
    CHECK(counts[0] == 4);
  }
}

TEST_CASE("branching direction concentrates top-down and bottom-up counts") {
  // left-branching chain: (((a b) c) d)
  const auto left = parse_bracketed_line("(S (S (S a b) c) d)", 0);
  const auto td_left = node_counts(left, ParseStrategy::topdown);
  CHECK(td_left == std::vector<int>{3, 0, 0, 0});  // all constituents open at word 0
  const auto bu_left = node_counts(left, ParseStrategy::bottomup);
  CHECK(bu_left == std::vector<int>{0, 1, 1, 1});  // one completes at each later word

  // right-branching chain: (a (b (c d)))
  const auto right = parse_bracketed_line("(S a (S b (S c d)))", 0);
  const auto td_right = node_counts(right, ParseStrategy::topdown);
  CHECK(td_right == std::vector<int>{1, 1, 1, 0});  // each constituent opens at its first word
  const auto bu_right = node_counts(right, ParseStrategy::bottomup);
  CHECK(bu_right == std::vector<int>{0, 0, 0, 3});  // everything completes at the last word
}

TEST_CASE("log frequency uses natural log, case folding and the floor") {
  FrequencyTable table = FrequencyTable::from_counts({{"the", 999.0}, {"Dog", 1.0}}, 1e-8);
  CHECK(table.log_frequency("dog") == doctest::Approx(std::log(0.001)).epsilon(1e-12));
  CHECK(table.log_frequency("DOG") == table.log_frequency("dog"));
  CHECK(table.log_frequency("unseen") == doctest::Approx(std::log(1e-8)).epsilon(1e-12));
  CHECK(table.log_frequency("the") == doctest::Approx(std::log(0.999)).epsilon(1e-12));
  CHECK_THROWS_AS(FrequencyTable::from_counts({{"x", -1.0}}), ValidationError);
  CHECK_THROWS_AS(FrequencyTable::from_counts({}), ValidationError);
}

namespace {

void write_timing(const std::string& path, const std::vector<std::string>& rows) {
  std::string csv = "sentence_id,word_index,word,onset_s,offset_s\n";
  for (const auto& r : rows) csv += r + "\n";
  write_text_file(path, csv);
}

}  // namespace

TEST_CASE("control table joins trees, frequencies and timings") {
  const auto dir = testutil::fresh_dir("controls");
  const auto trees = parse_bracketed("(S (NP the dog) (VP barked))");
  const auto freq = FrequencyTable::from_counts({{"the", 6.0}, {"dog", 3.0}, {"barked", 1.0}});
  write_timing((dir / "timing.csv").string(), {"0,0,the,0.1,0.4", "0,1,dog,0.4,0.9",
                                               "0,2,barked,0.9,1.5"});
  const auto timing = WordTiming::from_csv((dir / "timing.csv").string());

  const auto table = build_control_table(trees, freq, timing);
  REQUIRE(table.rows.size() == 3);
  int td = 0, bu = 0, lc = 0;
  for (const auto& r : table.rows) {
    CHECK(r.wordrate == 1);
    td += r.nc_topdown;
    bu += r.nc_bottomup;
    lc += r.nc_leftcorner;
  }
  CHECK(td == 3);
  CHECK(bu == 3);
  CHECK(lc == 3);
  CHECK(table.rows[2].offset_time == 1.5);
  CHECK(table.rows[0].log_freq == doctest::Approx(std::log(0.6)).epsilon(1e-12));
}

TEST_CASE("control table join is keyed, not positional") {
  const auto dir = testutil::fresh_dir("controls_shuffled");
  const auto trees = parse_bracketed("(S (NP the dog) (VP barked))");
  const auto freq = FrequencyTable::from_counts({{"the", 1.0}});
  write_timing((dir / "a.csv").string(), {"0,0,the,0.1,0.4", "0,1,dog,0.4,0.9", "0,2,barked,0.9,1.5"});
  write_timing((dir / "b.csv").string(), {"0,2,barked,0.9,1.5", "0,0,the,0.1,0.4", "0,1,dog,0.4,0.9"});
  const auto ta = build_control_table(trees, freq, WordTiming::from_csv((dir / "a.csv").string()));
  const auto tb = build_control_table(trees, freq, WordTiming::from_csv((dir / "b.csv").string()));
  REQUIRE(ta.rows.size() == tb.rows.size());
  for (std::size_t i = 0; i < ta.rows.size(); ++i) {
    CHECK(ta.rows[i].word == tb.rows[i].word);
    CHECK(ta.rows[i].offset_time == tb.rows[i].offset_time);
  }
}

TEST_CASE("missing and surplus timings are named errors") {
  const auto dir = testutil::fresh_dir("controls_missing");
  const auto trees = parse_bracketed("(S (NP the dog) (VP barked))");
  const auto freq = FrequencyTable::from_counts({{"the", 1.0}});

  write_timing((dir / "missing.csv").string(), {"0,0,the,0.1,0.4", "0,2,barked,0.9,1.5"});
  try {
    build_control_table(trees, freq, WordTiming::from_csv((dir / "missing.csv").string()));
    FAIL("expected a missing-word error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("sentence 0") != std::string::npos);
    CHECK(msg.find("word 1") != std::string::npos);
  }

  write_timing((dir / "surplus.csv").string(),
               {"0,0,the,0.1,0.4", "0,1,dog,0.4,0.9", "0,2,barked,0.9,1.5", "0,3,oops,1.5,2.0"});
  CHECK_THROWS_AS(
      build_control_table(trees, freq, WordTiming::from_csv((dir / "surplus.csv").string())),
      ValidationError);
}

TEST_CASE("offset times must increase strictly") {
  const auto dir = testutil::fresh_dir("controls_offsets");
  const auto trees = parse_bracketed("(S a b)");
  const auto freq = FrequencyTable::from_counts({{"a", 1.0}});
  write_timing((dir / "t.csv").string(), {"0,0,a,0.1,0.9", "0,1,b,0.4,0.9"});
  CHECK_THROWS_AS(build_control_table(trees, freq, WordTiming::from_csv((dir / "t.csv").string())),
                  ValidationError);
}

TEST_CASE("control table CSV round trip") {
  const auto dir = testutil::fresh_dir("controls_roundtrip");
  const auto trees = parse_bracketed("(S (NP the dog) (VP barked))");
  const auto freq = FrequencyTable::from_counts({{"the", 2.0}, {"dog", 1.0}});
  write_timing((dir / "timing.csv").string(),
               {"0,0,the,0.1,0.4", "0,1,dog,0.4,0.9", "0,2,barked,0.9,1.5"});
  const auto table =
      build_control_table(trees, freq, WordTiming::from_csv((dir / "timing.csv").string()));
  table.write_csv((dir / "controls.csv").string());
  const auto loaded = ControlTable::read_csv((dir / "controls.csv").string());
  REQUIRE(loaded.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded.rows[i].log_freq == table.rows[i].log_freq);
    CHECK(loaded.rows[i].nc_leftcorner == table.rows[i].nc_leftcorner);
    CHECK(loaded.rows[i].offset_time == table.rows[i].offset_time);
  }
}
