#include "compscore/model.hpp"

#include "compscore/csv.hpp"
#include "compscore/numerics.hpp"

#include <cmath>

namespace compscore {

namespace {

constexpr float kNormEps = 1e-5f;

Eigen::VectorXf apply_norm(const Eigen::VectorXf& x, const Eigen::VectorXf& weight, NormKind kind) {
  const auto n = static_cast<float>(x.size());
  if (kind == NormKind::rmsnorm) {
    const float rms = std::sqrt(x.squaredNorm() / n + kNormEps);
    return (x / rms).cwiseProduct(weight);
  }
  const float mean = x.mean();
  Eigen::VectorXf centered = x.array() - mean;
  const float var = centered.squaredNorm() / n;
  const float inv = 1.0f / std::sqrt(var + kNormEps);
  return (centered * inv).cwiseProduct(weight);
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }

float gelu(float v) { return 0.5f * v * (1.0f + std::erf(v * static_cast<float>(M_SQRT1_2))); }

// Rotary embedding, interleaved pairs (2j, 2j+1) within each head's slice
// [col0, col0 + head_dim) of row `position`.
void apply_rope(Eigen::MatrixXf& mat, int position, int col0, int head_dim, float theta) {
  for (int j = 0; j < head_dim / 2; ++j) {
    const float freq = std::pow(theta, -2.0f * static_cast<float>(j) / static_cast<float>(head_dim));
    const float angle = static_cast<float>(position) * freq;
    const float c = std::cos(angle);
    const float s = std::sin(angle);
    const float a = mat(position, col0 + 2 * j);
    const float b = mat(position, col0 + 2 * j + 1);
    mat(position, col0 + 2 * j) = a * c - b * s;
    mat(position, col0 + 2 * j + 1) = a * s + b * c;
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::silu_glu: return "silu_glu";
  }
  return "?";
}

std::string to_string(NormKind n) {
  return n == NormKind::layernorm ? "layernorm" : "rmsnorm";
}

std::string to_string(Positional p) {
  return p == Positional::rotary ? "rotary" : "learned_absolute";
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("model config: " + msg);
  };
  require(vocab_size >= 256, "vocab_size must be >= 256 (byte fallback range)");
  require(d_model >= 1, "d_model must be >= 1");
  require(n_layers >= 1, "n_layers must be >= 1");
  require(n_heads >= 1, "n_heads must be >= 1");
  require(d_ff >= 1, "d_ff must be >= 1");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require((d_model / n_heads) % 2 == 0 || positional != Positional::rotary,
          "rotary positional encoding needs an even head dimension");
  require(rope_theta > 0.0f, "rope_theta must be positive");
  require(max_seq_len >= 1, "max_seq_len must be >= 1");
}

ModelBundle::ModelBundle(ModelConfig config, Vocabulary vocab, Eigen::MatrixXf embedding,
                         std::vector<LayerWeights> layers, Eigen::VectorXf final_norm,
                         Eigen::MatrixXf lm_head, Eigen::MatrixXf pos_embedding)
    : config_(config),
      vocab_(std::move(vocab)),
      embedding_(std::move(embedding)),
      layers_(std::move(layers)),
      final_norm_(std::move(final_norm)),
      lm_head_(std::move(lm_head)),
      pos_embedding_(std::move(pos_embedding)) {}

LayerTrace forward_with_trace(const ModelBundle& bundle, std::span<const std::int32_t> token_ids) {
  const ModelConfig& cfg = bundle.config();
  const int n_pos = static_cast<int>(token_ids.size());
  if (n_pos == 0) throw ValidationError("forward: empty token sequence");
  if (n_pos > cfg.max_seq_len) {
    throw ValidationError("forward: sequence length " + std::to_string(n_pos) +
                          " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (auto id : token_ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw ValidationError("forward: token id " + std::to_string(id) + " outside vocabulary");
    }
  }

  const int d = cfg.d_model;
  const int hd = d / cfg.n_heads;
  const float attn_scale = 1.0f / std::sqrt(static_cast<float>(hd));

  Eigen::MatrixXf x(n_pos, d);  // residual stream, rows = positions
  for (int t = 0; t < n_pos; ++t) {
    x.row(t) = bundle.embedding().row(token_ids[static_cast<std::size_t>(t)]);
    if (cfg.positional == Positional::learned_absolute) {
      x.row(t) += bundle.position_embedding().row(t);
    }
  }

  LayerTrace trace;
  trace.activations.reserve(static_cast<std::size_t>(cfg.n_layers));
  trace.ffn_outputs.reserve(static_cast<std::size_t>(cfg.n_layers));
  trace.hidden_states.reserve(static_cast<std::size_t>(cfg.n_layers));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& w = bundle.layer(l);

    Eigen::MatrixXf xn(n_pos, d);
    for (int t = 0; t < n_pos; ++t) xn.row(t) = apply_norm(x.row(t), w.norm1, cfg.norm).transpose();

    Eigen::MatrixXf q = xn * w.attn_q.transpose();
    Eigen::MatrixXf k = xn * w.attn_k.transpose();
    Eigen::MatrixXf v = xn * w.attn_v.transpose();

    if (cfg.positional == Positional::rotary) {
      for (int h = 0; h < cfg.n_heads; ++h) {
        for (int t = 0; t < n_pos; ++t) {
          apply_rope(q, t, h * hd, hd, cfg.rope_theta);
          apply_rope(k, t, h * hd, hd, cfg.rope_theta);
        }
      }
    }

    Eigen::MatrixXf attn_out(n_pos, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto qh = q.middleCols(h * hd, hd);
      const auto kh = k.middleCols(h * hd, hd);
      const auto vh = v.middleCols(h * hd, hd);
      for (int t = 0; t < n_pos; ++t) {
        // causal: position t attends to 0..t
        Eigen::VectorXf scores = (kh.topRows(t + 1) * qh.row(t).transpose()) * attn_scale;
        const float mx = scores.maxCoeff();
        Eigen::VectorXf weights = (scores.array() - mx).exp();
        weights /= weights.sum();
        attn_out.block(t, h * hd, 1, hd) = (weights.transpose() * vh.topRows(t + 1));
      }
    }
    x += attn_out * w.attn_o.transpose();

    Eigen::MatrixXf xn2(n_pos, d);
    for (int t = 0; t < n_pos; ++t) xn2.row(t) = apply_norm(x.row(t), w.norm2, cfg.norm).transpose();

    Eigen::MatrixXf m;  // [n_pos, d_ff] neuron coefficients
    if (cfg.gated()) {
      Eigen::MatrixXf gate = xn2 * w.ffn_gate.transpose();
      Eigen::MatrixXf up = xn2 * w.ffn_up.transpose();
      m = gate.unaryExpr(&silu).cwiseProduct(up);
    } else {
      m = xn2 * w.ffn_up.transpose();
      if (cfg.activation == Activation::relu) {
        m = m.cwiseMax(0.0f);
      } else {
        m = m.unaryExpr(&gelu);
      }
    }
    Eigen::MatrixXf ffn_out = m * w.ffn_down.transpose();
    x += ffn_out;

    trace.activations.push_back(std::move(m));
    trace.ffn_outputs.push_back(std::move(ffn_out));
    trace.hidden_states.push_back(x);
  }

  Eigen::MatrixXf xf(n_pos, d);
  for (int t = 0; t < n_pos; ++t) {
    xf.row(t) = apply_norm(x.row(t), bundle.final_norm_weight(), cfg.norm).transpose();
  }
  trace.logits = xf * bundle.unembedding().transpose();

  if (!trace.logits.allFinite()) throw std::runtime_error("forward: non-finite logits");
  return trace;
}

}  // namespace compscore
