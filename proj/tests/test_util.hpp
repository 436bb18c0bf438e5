#pragma once

#include "compscore/model.hpp"
#include "compscore/parse_tree.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testutil {

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("compscore_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline compscore::ModelConfig toy_config(int vocab = 512, int d_model = 64, int n_layers = 4,
                                         int n_heads = 4, int d_ff = 256) {
  compscore::ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = d_model;
  cfg.n_layers = n_layers;
  cfg.n_heads = n_heads;
  cfg.d_ff = d_ff;
  cfg.activation = compscore::Activation::silu_glu;
  cfg.norm = compscore::NormKind::rmsnorm;
  cfg.positional = compscore::Positional::rotary;
  cfg.rope_theta = 10000.0f;
  cfg.max_seq_len = 128;
  cfg.tie_embeddings = true;
  return cfg;
}

// Random tree over n_terminals words: recursively partitions the yield.
inline compscore::TreeNode random_tree_node(std::mt19937_64& rng, int first_word, int n_words,
                                            int depth) {
  compscore::TreeNode node;
  node.label = "N" + std::to_string(depth);
  if (n_words == 1 && (depth > 0 && rng() % 3 == 0)) {
    compscore::TreeNode leaf;
    leaf.terminal = true;
    leaf.label = "w" + std::to_string(first_word);
    node.children.push_back(leaf);
    return node;
  }
  if (n_words == 1) {
    compscore::TreeNode leaf;
    leaf.terminal = true;
    leaf.label = "w" + std::to_string(first_word);
    node.children.push_back(leaf);
    return node;
  }
  // split into 1..min(4, n_words) parts
  const int parts = 2 + static_cast<int>(rng() % static_cast<unsigned long>(std::min(3, n_words - 1)));
  std::vector<int> sizes(static_cast<std::size_t>(std::min(parts, n_words)), 1);
  int leftover = n_words - static_cast<int>(sizes.size());
  for (auto& s : sizes) {
    if (leftover <= 0) break;
    const int extra = static_cast<int>(rng() % static_cast<unsigned long>(leftover + 1));
    s += extra;
    leftover -= extra;
  }
  sizes.back() += leftover;
  int word = first_word;
  for (int s : sizes) {
    if (depth < 5 && rng() % 2 == 0) {
      node.children.push_back(random_tree_node(rng, word, s, depth + 1));
    } else {
      for (int i = 0; i < s; ++i) {
        compscore::TreeNode leaf;
        leaf.terminal = true;
        leaf.label = "w" + std::to_string(word + i);
        node.children.push_back(leaf);
      }
    }
    word += s;
  }
  return node;
}

inline compscore::ParseTree random_tree(std::mt19937_64& rng, int max_terminals = 12) {
  compscore::ParseTree tree;
  const int n = 1 + static_cast<int>(rng() % static_cast<unsigned long>(max_terminals));
  tree.root = random_tree_node(rng, 0, n, 0);
  tree.root.label = "S";
  tree.sentence_id = 0;
  return tree;
}

}  // namespace testutil
