#include "compscore/composition.hpp"

#include "compscore/csv.hpp"
#include "compscore/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace compscore {

Eigen::VectorXd project_to_vocab(const Eigen::VectorXf& v, const Eigen::MatrixXf& unembedding) {
  if (v.size() != unembedding.cols()) {
    throw ValidationError("project_to_vocab: vector length " + std::to_string(v.size()) +
                          " does not match unembedding width " + std::to_string(unembedding.cols()));
  }
  Eigen::VectorXf logits = unembedding * v;
  return softmax(logits);
}

double js_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q, LogBase base) {
  if (p.size() != q.size()) throw ValidationError("js_distance: length mismatch");
  double div = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    const double qi = q[i];
    const double mi = 0.5 * (pi + qi);
    if (pi > 0.0) div += 0.5 * pi * std::log(pi / mi);
    if (qi > 0.0) div += 0.5 * qi * std::log(qi / mi);
  }
  if (base == LogBase::two) div /= M_LN2;
  return std::sqrt(std::max(div, 0.0));
}

NeuronProjectionCache::NeuronProjectionCache(const ModelBundle& bundle) {
  const int n_layers = bundle.config().n_layers;
  const int d_ff = bundle.config().d_ff;
  per_layer_.resize(static_cast<std::size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    auto& dists = per_layer_[static_cast<std::size_t>(l)];
    dists.reserve(static_cast<std::size_t>(d_ff));
    for (int i = 0; i < d_ff; ++i) {
      dists.push_back(project_to_vocab(bundle.neuron_value(l, i), bundle.unembedding()));
    }
  }
}

namespace {

void check_indices(const LayerTrace& trace, int layer, int position) {
  if (layer < 0 || layer >= trace.n_layers()) {
    throw ValidationError("composition score: layer " + std::to_string(layer) + " out of range");
  }
  if (position < 0 || position >= trace.n_positions()) {
    throw ValidationError("composition score: position " + std::to_string(position) + " out of range");
  }
}

// min/max distance ratio over a neuron subset; max == 0 degenerates to 1.
double ratio_over_neurons(const LayerTrace& trace, int layer, int position,
                          const ModelBundle& bundle, const NeuronProjectionCache* cache,
                          std::span<const int> neurons) {
  const Eigen::VectorXf out =
      trace.ffn_outputs[static_cast<std::size_t>(layer)].row(position).transpose();
  const Eigen::VectorXd p_out = project_to_vocab(out, bundle.unembedding());

  double min_d = std::numeric_limits<double>::infinity();
  double max_d = 0.0;
  for (int i : neurons) {
    double d;
    if (cache != nullptr) {
      d = js_distance(cache->distribution(layer, i), p_out);
    } else {
      d = js_distance(project_to_vocab(bundle.neuron_value(layer, i), bundle.unembedding()), p_out);
    }
    min_d = std::min(min_d, d);
    max_d = std::max(max_d, d);
  }
  if (max_d == 0.0) return 1.0;
  return min_d / max_d;
}

}  // namespace

double composition_score_exact(const LayerTrace& trace, int layer, int position,
                               const ModelBundle& bundle, const NeuronProjectionCache* cache) {
  check_indices(trace, layer, position);
  const int d_ff = bundle.config().d_ff;
  std::vector<int> all(static_cast<std::size_t>(d_ff));
  std::iota(all.begin(), all.end(), 0);
  return ratio_over_neurons(trace, layer, position, bundle, cache, all);
}

std::pair<double, int> composition_score_approx(const LayerTrace& trace, int layer, int position,
                                                const ModelBundle& bundle, int d_m_prime,
                                                const NeuronProjectionCache* cache) {
  check_indices(trace, layer, position);
  if (d_m_prime < 1) throw ValidationError("composition score: d_m_prime must be >= 1");
  const int d_ff = bundle.config().d_ff;
  const int k = std::min(d_m_prime, d_ff);

  const auto& acts = trace.activations[static_cast<std::size_t>(layer)];
  std::vector<int> order(static_cast<std::size_t>(d_ff));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::fabs(acts(position, a)) > std::fabs(acts(position, b));
  });
  order.resize(static_cast<std::size_t>(k));
  return {ratio_over_neurons(trace, layer, position, bundle, cache, order), k};
}

int majority_k(std::span<const float> activations, double coverage) {
  std::vector<double> mags(activations.size());
  for (std::size_t i = 0; i < activations.size(); ++i) mags[i] = std::fabs(activations[i]);
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  const double total = std::accumulate(mags.begin(), mags.end(), 0.0);
  if (total <= 0.0) return 0;  // caller skips all-zero vectors
  const double target = coverage * total;
  double running = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    running += mags[k];
    if (running > target) return static_cast<int>(k + 1);
  }
  return static_cast<int>(mags.size());
}

MajorityKReport calibrate_majority_k(const ModelBundle& bundle,
                                     std::span<const std::vector<std::int32_t>> token_chunks,
                                     double coverage) {
  if (coverage <= 0.0 || coverage >= 1.0) {
    throw ValidationError("calibrate_majority_k: coverage must be in (0,1)");
  }
  long total_tokens = 0;
  for (const auto& chunk : token_chunks) total_tokens += static_cast<long>(chunk.size());
  if (total_tokens == 0) throw ValidationError("calibrate_majority_k: empty corpus");

  const int n_layers = bundle.config().n_layers;
  std::vector<double> layer_sum(static_cast<std::size_t>(n_layers), 0.0);
  std::vector<long> layer_count(static_cast<std::size_t>(n_layers), 0);
  long skipped = 0;

  for (const auto& chunk : token_chunks) {
    if (chunk.empty()) continue;
    const LayerTrace trace = forward_with_trace(bundle, chunk);
    for (int l = 0; l < n_layers; ++l) {
      const auto& acts = trace.activations[static_cast<std::size_t>(l)];
      for (int t = 0; t < trace.n_positions(); ++t) {
        Eigen::RowVectorXf row = acts.row(t);
        const int k = majority_k(std::span<const float>(row.data(), static_cast<std::size_t>(row.size())),
                                 coverage);
        if (k == 0) {
          ++skipped;
          continue;
        }
        layer_sum[static_cast<std::size_t>(l)] += k;
        layer_count[static_cast<std::size_t>(l)] += 1;
      }
    }
  }

  MajorityKReport report;
  report.coverage = coverage;
  report.token_count = total_tokens;
  report.skipped_cells = skipped;
  double grand_sum = 0.0;
  long grand_count = 0;
  for (int l = 0; l < n_layers; ++l) {
    const long c = layer_count[static_cast<std::size_t>(l)];
    report.per_layer_mean_k.push_back(c > 0 ? layer_sum[static_cast<std::size_t>(l)] / c : 0.0);
    grand_sum += layer_sum[static_cast<std::size_t>(l)];
    grand_count += c;
  }
  if (grand_count == 0) throw ValidationError("calibrate_majority_k: every activation vector was zero");
  report.overall_mean_k = grand_sum / static_cast<double>(grand_count);
  return report;
}

void ScoreTable::write_csv(const std::string& path) const {
  std::string out = "sentence_id,word_index,word,layer,score,n_neurons\n";
  for (const auto& r : rows) {
    out += std::to_string(r.sentence_id);
    out += ',';
    out += std::to_string(r.word_index);
    out += ',';
    out += r.word;
    out += ',';
    out += std::to_string(r.layer);
    out += ',';
    out += format_double(r.score);
    out += ',';
    out += std::to_string(r.n_neurons);
    out += '\n';
  }
  write_text_file(path, out);
}

ScoreTable ScoreTable::read_csv(const std::string& path) {
  ScoreTable table;
  const auto rows = compscore::read_csv(path, "sentence_id,word_index,word,layer,score,n_neurons");
  for (const auto& f : rows) {
    ScoreRow r;
    r.sentence_id = static_cast<int>(parse_long(f[0]));
    r.word_index = static_cast<int>(parse_long(f[1]));
    r.word = f[2];
    r.layer = static_cast<int>(parse_long(f[3]));
    r.score = parse_double(f[4]);
    r.n_neurons = static_cast<int>(parse_long(f[5]));
    table.n_layers = std::max(table.n_layers, r.layer + 1);
    table.rows.push_back(std::move(r));
  }
  return table;
}

WordAlignment align_words(const Vocabulary& vocab, std::string_view sentence) {
  WordAlignment a;
  a.words = split_words(sentence);
  a.spans = vocab.tokenize(sentence);
  a.last_token_position.assign(a.words.size(), -1);
  for (std::size_t t = 0; t < a.spans.size(); ++t) {
    for (std::size_t w = 0; w < a.words.size(); ++w) {
      if (a.spans[t].char_start < a.words[w].end && a.spans[t].char_end > a.words[w].start) {
        a.last_token_position[w] = static_cast<int>(t);
      }
    }
  }
  return a;
}

ScoreTable score_text(const ModelBundle& bundle, std::span<const std::string> sentences,
                      const ScoreOptions& options, std::vector<int>* skipped_sentences) {
  const int n_layers = bundle.config().n_layers;
  const NeuronProjectionCache cache(bundle);

  struct SentenceResult {
    std::vector<ScoreRow> rows;
    bool skipped = false;
  };
  std::vector<SentenceResult> results(sentences.size());

  parallel_for(sentences.size(), options.threads, [&](std::size_t s) {
    const std::string& sentence = sentences[s];
    const WordAlignment align = align_words(bundle.vocab(), sentence);
    const auto& words = align.words;
    if (words.empty()) return;

    if (static_cast<int>(align.spans.size()) > bundle.config().max_seq_len) {
      results[s].skipped = true;
      return;
    }
    std::vector<std::int32_t> ids(align.spans.size());
    for (std::size_t i = 0; i < align.spans.size(); ++i) ids[i] = align.spans[i].token_id;
    const LayerTrace trace = forward_with_trace(bundle, ids);

    for (std::size_t w = 0; w < words.size(); ++w) {
      const int pos = align.last_token_position[w];
      const std::string word = sentence.substr(static_cast<std::size_t>(words[w].start),
                                               static_cast<std::size_t>(words[w].end - words[w].start));
      const std::string prefix = sentence.substr(0, static_cast<std::size_t>(words[w].end));
      for (int l = 0; l < n_layers; ++l) {
        ScoreRow row;
        row.sentence_id = static_cast<int>(s);
        row.word_index = static_cast<int>(w);
        row.word = word;
        row.prefix = prefix;
        row.layer = l;
        if (options.exact) {
          row.score = composition_score_exact(trace, l, pos, bundle, &cache);
          row.n_neurons = bundle.config().d_ff;
        } else {
          auto [score, used] = composition_score_approx(trace, l, pos, bundle, options.d_m_prime, &cache);
          row.score = score;
          row.n_neurons = used;
        }
        results[s].rows.push_back(std::move(row));
      }
    }
  });

  ScoreTable table;
  table.n_layers = n_layers;
  for (std::size_t s = 0; s < results.size(); ++s) {
    if (results[s].skipped) {
      if (skipped_sentences != nullptr) skipped_sentences->push_back(static_cast<int>(s));
      continue;
    }
    for (auto& row : results[s].rows) table.rows.push_back(std::move(row));
  }
  return table;
}

Eigen::MatrixXd layerwise_correlation(const ScoreTable& table) {
  const int n_layers = table.n_layers;
  // per-layer series over (sentence, word) in row order
  std::vector<std::vector<double>> series(static_cast<std::size_t>(n_layers));
  for (const auto& r : table.rows) {
    series[static_cast<std::size_t>(r.layer)].push_back(r.score);
  }
  const std::size_t n_words = series.empty() ? 0 : series[0].size();
  if (n_words < 2) throw ValidationError("layerwise_correlation: needs at least 2 words");
  for (const auto& s : series) {
    if (s.size() != n_words) {
      throw std::runtime_error("layerwise_correlation: ragged layer series");
    }
  }

  Eigen::MatrixXd corr(n_layers, n_layers);
  std::vector<Eigen::VectorXd> cols;
  cols.reserve(static_cast<std::size_t>(n_layers));
  for (const auto& s : series) {
    cols.push_back(Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
  }
  for (int a = 0; a < n_layers; ++a) {
    for (int b = a; b < n_layers; ++b) {
      const double r = (a == b) ? 1.0 : pearson(cols[static_cast<std::size_t>(a)],
                                                cols[static_cast<std::size_t>(b)]);
      corr(a, b) = r;
      corr(b, a) = r;
    }
  }
  // zero-variance layers are undefined everywhere, including the diagonal
  for (int a = 0; a < n_layers; ++a) {
    const double var = (cols[static_cast<std::size_t>(a)].array() -
                        cols[static_cast<std::size_t>(a)].mean())
                           .square()
                           .sum();
    if (var <= 0.0) {
      corr.row(a).setConstant(std::numeric_limits<double>::quiet_NaN());
      corr.col(a).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return corr;
}

std::pair<std::vector<PrefixScore>, std::vector<PrefixScore>> extreme_prefixes(
    const ScoreTable& table, int layer, int n) {
  if (n < 1) throw ValidationError("extreme_prefixes: n must be >= 1");
  if (layer < 0 || layer >= table.n_layers) {
    throw ValidationError("extreme_prefixes: layer " + std::to_string(layer) + " out of range");
  }
  std::vector<const ScoreRow*> rows;
  for (const auto& r : table.rows) {
    if (r.layer == layer) rows.push_back(&r);
  }
  auto make = [](const ScoreRow* r) {
    return PrefixScore{r->prefix, r->score, r->sentence_id, r->word_index};
  };
  auto by_sentence = [](const ScoreRow* a, const ScoreRow* b) {
    return std::tie(a->sentence_id, a->word_index) < std::tie(b->sentence_id, b->word_index);
  };

  std::vector<const ScoreRow*> low = rows;
  std::sort(low.begin(), low.end(), [&](const ScoreRow* a, const ScoreRow* b) {
    if (a->score != b->score) return a->score < b->score;
    return by_sentence(a, b);
  });
  std::vector<const ScoreRow*> high = rows;
  std::sort(high.begin(), high.end(), [&](const ScoreRow* a, const ScoreRow* b) {
    if (a->score != b->score) return a->score > b->score;
    return by_sentence(a, b);
  });

  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), rows.size());
  std::vector<PrefixScore> lowest, highest;
  for (std::size_t i = 0; i < take; ++i) {
    lowest.push_back(make(low[i]));
    highest.push_back(make(high[i]));
  }
  return {std::move(lowest), std::move(highest)};
}

}  // namespace compscore
