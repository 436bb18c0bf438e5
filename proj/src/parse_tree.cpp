#include "compscore/parse_tree.hpp"

#include "compscore/csv.hpp"

#include <cctype>
#include <stdexcept>

namespace compscore {

namespace {

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  void skip_space() {
    while (!done() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError("parse error at byte " + std::to_string(pos) + ": " + msg);
  }
};

std::string read_atom(Cursor& c) {
  const std::size_t start = c.pos;
  while (!c.done() && c.peek() != '(' && c.peek() != ')' &&
         !std::isspace(static_cast<unsigned char>(c.peek()))) {
    ++c.pos;
  }
  return std::string(c.text.substr(start, c.pos - start));
}

TreeNode read_node(Cursor& c) {
  c.skip_space();
  if (c.done()) c.fail("unbalanced parentheses (unexpected end of line)");
  if (c.peek() != '(') {
    TreeNode leaf;
    leaf.terminal = true;
    leaf.label = read_atom(c);
    if (leaf.label.empty()) c.fail("expected a word or '('");
    return leaf;
  }
  ++c.pos;  // consume '('
  c.skip_space();
  TreeNode node;
  node.label = read_atom(c);
  if (node.label.empty()) c.fail("empty nonterminal label");
  while (true) {
    c.skip_space();
    if (c.done()) c.fail("unbalanced parentheses (unexpected end of line)");
    if (c.peek() == ')') {
      ++c.pos;
      break;
    }
    node.children.push_back(read_node(c));
  }
  if (node.children.empty()) c.fail("nonterminal '" + node.label + "' has no children");
  return node;
}

void collect_words(const TreeNode& node, std::vector<std::string>& out) {
  if (node.terminal) {
    out.push_back(node.label);
    return;
  }
  for (const auto& child : node.children) collect_words(child, out);
}

int count_nonterminals(const TreeNode& node) {
  if (node.terminal) return 0;
  int n = 1;
  for (const auto& child : node.children) n += count_nonterminals(child);
  return n;
}

// Terminal index range [first, last] covered by a subtree; next_index walks
// left to right.
struct Boundary {
  int first = 0;
  int last = 0;
  int left_child_last = 0;  // last terminal of the leftmost child (nonterminals)
};

void attribute(const TreeNode& node, int& next_index, ParseStrategy strategy,
               std::vector<int>& counts, int& first, int& last) {
  if (node.terminal) {
    first = last = next_index++;
    return;
  }
  int node_first = -1, node_last = -1, left_child_last = -1;
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    int cf = 0, cl = 0;
    attribute(node.children[i], next_index, strategy, counts, cf, cl);
    if (i == 0) {
      node_first = cf;
      left_child_last = cl;
    }
    node_last = cl;
  }
  switch (strategy) {
    case ParseStrategy::topdown: counts[static_cast<std::size_t>(node_first)] += 1; break;
    case ParseStrategy::bottomup: counts[static_cast<std::size_t>(node_last)] += 1; break;
    case ParseStrategy::leftcorner: counts[static_cast<std::size_t>(left_child_last)] += 1; break;
  }
  first = node_first;
  last = node_last;
}

}  // namespace

std::vector<std::string> ParseTree::words() const {
  std::vector<std::string> out;
  collect_words(root, out);
  return out;
}

int ParseTree::terminal_count() const { return static_cast<int>(words().size()); }

int ParseTree::nonterminal_count() const { return count_nonterminals(root); }

ParseTree parse_bracketed_line(std::string_view line, int sentence_id) {
  Cursor c{line, 0};
  c.skip_space();
  if (c.done() || c.peek() != '(') c.fail("a tree must start with '('");
  ParseTree tree;
  tree.root = read_node(c);
  if (tree.root.terminal) c.fail("a tree must have a nonterminal root");
  c.skip_space();
  if (!c.done()) c.fail("trailing content after the tree");
  if (tree.terminal_count() < 1) c.fail("tree has no terminals");
  tree.sentence_id = sentence_id;
  return tree;
}

std::vector<ParseTree> parse_bracketed(std::string_view text) {
  std::vector<ParseTree> trees;
  std::size_t start = 0;
  int next_id = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    bool blank = true;
    for (char ch : line) {
      if (!std::isspace(static_cast<unsigned char>(ch))) {
        blank = false;
        break;
      }
    }
    if (!blank) {
      trees.push_back(parse_bracketed_line(line, next_id));
      ++next_id;
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return trees;
}

std::vector<int> node_counts(const ParseTree& tree, ParseStrategy strategy) {
  std::vector<int> counts(static_cast<std::size_t>(tree.terminal_count()), 0);
  int next_index = 0;
  int first = 0, last = 0;
  attribute(tree.root, next_index, strategy, counts, first, last);
  return counts;
}

}  // namespace compscore
