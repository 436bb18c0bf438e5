#pragma once

#include "compscore/model.hpp"
#include "compscore/numerics.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace compscore {

// --- vocabulary-space projection -----------------------------------------

// softmax of the inner products between a hidden-dimension vector and each
// unembedding row. Applied the same way to neuron values and FFN outputs.
Eigen::VectorXd project_to_vocab(const Eigen::VectorXf& v, const Eigen::MatrixXf& unembedding);

enum class LogBase { two, natural };

// Jensen-Shannon distance sqrt(0.5*KL(p||m) + 0.5*KL(q||m)), m = (p+q)/2,
// with 0*log(0) = 0. Base-2 logs bound the result by 1.
double js_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                   LogBase base = LogBase::two);

// --- composition scores ---------------------------------------------------

// Per-layer cache of the projected neuron-value distributions (the value
// vectors do not depend on the token position, so these are computed once).
// Read-only after construction; shareable across threads.
class NeuronProjectionCache {
 public:
  explicit NeuronProjectionCache(const ModelBundle& bundle);

  const Eigen::VectorXd& distribution(int layer, int neuron) const {
    return per_layer_[static_cast<std::size_t>(layer)][static_cast<std::size_t>(neuron)];
  }
  int n_layers() const { return static_cast<int>(per_layer_.size()); }

 private:
  std::vector<std::vector<Eigen::VectorXd>> per_layer_;
};

// min/max ratio of the JS distances between every neuron distribution and
// the FFN-output distribution at (layer, position). Returns 1 when the max
// distance is 0 (all memories coincide with the output).
double composition_score_exact(const LayerTrace& trace, int layer, int position,
                               const ModelBundle& bundle,
                               const NeuronProjectionCache* cache = nullptr);

// Same ratio over the d_m_prime neurons with the largest |activation| at the
// position (ties to the lower index). Returns {score, neurons used}.
std::pair<double, int> composition_score_approx(const LayerTrace& trace, int layer, int position,
                                                const ModelBundle& bundle, int d_m_prime,
                                                const NeuronProjectionCache* cache = nullptr);

// --- majority-k calibration ------------------------------------------------

struct MajorityKReport {
  std::vector<double> per_layer_mean_k;  // token-mean per layer
  double overall_mean_k = 0.0;           // mean over all (token, layer) cells
  double coverage = 0.0;
  long token_count = 0;
  long skipped_cells = 0;  // all-zero activation vectors
};

// Minimal k whose largest |activations| sum to strictly more than
// coverage * total |activation| mass.
int majority_k(std::span<const float> activations, double coverage);

MajorityKReport calibrate_majority_k(const ModelBundle& bundle,
                                     std::span<const std::vector<std::int32_t>> token_chunks,
                                     double coverage);

// --- sentence scoring -------------------------------------------------------

struct ScoreRow {
  int sentence_id = 0;
  int word_index = 0;
  std::string word;
  std::string prefix;  // sentence text through the end of this word
  int layer = 0;
  double score = 0.0;
  int n_neurons = 0;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;  // ordered by (sentence, word, layer)
  int n_layers = 0;

  void write_csv(const std::string& path) const;
  // prefix fields are not serialized; read tables have empty prefixes
  static ScoreTable read_csv(const std::string& path);
};

struct ScoreOptions {
  bool exact = false;
  int d_m_prime = 3000;
  int threads = 1;
};

// Tokenization plus, for each whitespace word, the position of the last
// token overlapping the word's bytes (its last subword token).
struct WordAlignment {
  std::vector<WordSpan> words;
  std::vector<TokenSpan> spans;
  std::vector<int> last_token_position;  // one per word
};

WordAlignment align_words(const Vocabulary& vocab, std::string_view sentence);

// One forward pass per sentence; each word is scored at the position of its
// last subword token, at every layer. Oversized sentences are skipped and
// reported through skipped_sentences.
ScoreTable score_text(const ModelBundle& bundle, std::span<const std::string> sentences,
                      const ScoreOptions& options,
                      std::vector<int>* skipped_sentences = nullptr);

// Pearson correlation between the per-word score series of each layer pair.
// Layers with zero variance get NaN rows/columns.
Eigen::MatrixXd layerwise_correlation(const ScoreTable& table);

struct PrefixScore {
  std::string prefix;
  double score = 0.0;
  int sentence_id = 0;
  int word_index = 0;
};

// n lowest- and n highest-scoring rows of a layer; ties broken by sentence
// order. Returns {lowest, highest}.
std::pair<std::vector<PrefixScore>, std::vector<PrefixScore>> extreme_prefixes(
    const ScoreTable& table, int layer, int n);

}  // namespace compscore
