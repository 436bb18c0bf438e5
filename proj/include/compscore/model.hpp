#pragma once

#include "compscore/tokenizer.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace compscore {

enum class Activation { relu, gelu, silu_glu };
enum class NormKind { layernorm, rmsnorm };
enum class Positional { rotary, learned_absolute };

std::string to_string(Activation a);
std::string to_string(NormKind n);
std::string to_string(Positional p);

// Decoder-only transformer hyperparameters. All linear layers are bias-free;
// norm layers carry a weight vector only.
struct ModelConfig {
  int vocab_size = 0;
  int d_model = 0;
  int n_layers = 0;
  int n_heads = 0;
  int d_ff = 0;
  Activation activation = Activation::silu_glu;
  NormKind norm = NormKind::rmsnorm;
  Positional positional = Positional::rotary;
  float rope_theta = 10000.0f;
  int max_seq_len = 0;
  bool tie_embeddings = true;

  void validate() const;  // throws ValidationError on any bad field
  bool gated() const { return activation == Activation::silu_glu; }
};

struct LayerWeights {
  Eigen::MatrixXf attn_q, attn_k, attn_v, attn_o;  // [d_model, d_model]
  Eigen::MatrixXf ffn_gate;                        // [d_ff, d_model], gated only
  Eigen::MatrixXf ffn_up;                          // [d_ff, d_model]
  Eigen::MatrixXf ffn_down;                        // [d_model, d_ff]
  Eigen::VectorXf norm1, norm2;                    // [d_model]
};

// Immutable weights + tokenizer; safe to share across threads after load.
class ModelBundle {
 public:
  ModelBundle(ModelConfig config, Vocabulary vocab, Eigen::MatrixXf embedding,
              std::vector<LayerWeights> layers, Eigen::VectorXf final_norm,
              Eigen::MatrixXf lm_head, Eigen::MatrixXf pos_embedding);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Eigen::MatrixXf& embedding() const { return embedding_; }        // [vocab, d_model]
  const Eigen::MatrixXf& unembedding() const { return lm_head_; }        // [vocab, d_model]
  const LayerWeights& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
  const Eigen::VectorXf& final_norm_weight() const { return final_norm_; }
  const Eigen::MatrixXf& position_embedding() const { return pos_embedding_; }  // [max_seq_len, d_model]

  // Value vector of FFN neuron i in a layer: column i of the down projection.
  Eigen::VectorXf neuron_value(int layer_index, int neuron) const {
    return layers_.at(static_cast<std::size_t>(layer_index)).ffn_down.col(neuron);
  }

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  Eigen::MatrixXf embedding_;
  std::vector<LayerWeights> layers_;
  Eigen::VectorXf final_norm_;
  Eigen::MatrixXf lm_head_;
  Eigen::MatrixXf pos_embedding_;  // empty unless learned_absolute
};

// Everything the score needs from a teacher-forced forward pass. Rows are
// token positions.
struct LayerTrace {
  std::vector<Eigen::MatrixXf> activations;    // per layer [n_pos, d_ff]
  std::vector<Eigen::MatrixXf> ffn_outputs;    // per layer [n_pos, d_model]
  std::vector<Eigen::MatrixXf> hidden_states;  // per layer [n_pos, d_model] (post-block)
  Eigen::MatrixXf logits;                      // [n_pos, vocab]

  int n_positions() const { return static_cast<int>(logits.rows()); }
  int n_layers() const { return static_cast<int>(activations.size()); }
};

// Full-sequence causal forward pass with per-layer capture. Deterministic:
// a single pass never parallelizes internally.
LayerTrace forward_with_trace(const ModelBundle& bundle, std::span<const std::int32_t> token_ids);

// --- model directory I/O -----------------------------------------------
//
// A model directory holds config.json, tensors.json (name/offset/shape/dtype
// manifest), weights.bin (raw little-endian f32, row-major) and vocab.txt.

ModelBundle load_model(const std::filesystem::path& model_dir);
void save_model(const ModelBundle& bundle, const std::filesystem::path& model_dir);

// Fresh Gaussian-initialized model, N(0, 1/d_model) weights, unit norm
// weights; bitwise deterministic for a given seed. The default vocabulary is
// the 256 byte tokens plus inert filler strings up to vocab_size.
ModelBundle init_random_model(const ModelConfig& config, std::uint64_t seed);
ModelBundle init_random_model(const ModelConfig& config, std::uint64_t seed, Vocabulary vocab);

}  // namespace compscore
