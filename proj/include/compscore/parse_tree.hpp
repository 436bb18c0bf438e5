#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace compscore {

// Constituency tree node. Terminals carry the word in `label` and have no
// children; nonterminals always have at least one child.
struct TreeNode {
  std::string label;
  bool terminal = false;
  std::vector<TreeNode> children;
};

struct ParseTree {
  TreeNode root;
  int sentence_id = 0;

  std::vector<std::string> words() const;
  int terminal_count() const;
  int nonterminal_count() const;
};

// Parses one Penn-style bracketed tree, e.g. "(S (NP the dog) (VP barked))".
// Errors carry the byte offset of the problem.
ParseTree parse_bracketed_line(std::string_view line, int sentence_id);

// One tree per non-blank line.
std::vector<ParseTree> parse_bracketed(std::string_view text);

enum class ParseStrategy { topdown, bottomup, leftcorner };

// Parsing steps attributed to each word:
//   topdown    - nonterminals whose leftmost terminal descendant is the word
//                (predicted when their yield starts),
//   bottomup   - nonterminals whose rightmost terminal descendant is the word
//                (reduced when their yield completes),
//   leftcorner - nonterminals whose leftmost child's subtree ends at the word
//                (announced when their left corner completes).
// Every nonterminal contributes exactly once, so the counts sum to the
// nonterminal count under all three strategies.
std::vector<int> node_counts(const ParseTree& tree, ParseStrategy strategy);

}  // namespace compscore
