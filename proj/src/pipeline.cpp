#include "compscore/pipeline.hpp"

#include "compscore/cluster.hpp"
#include "compscore/composition.hpp"
#include "compscore/controls.hpp"
#include "compscore/csv.hpp"
#include "compscore/encoding.hpp"
#include "compscore/model.hpp"
#include "compscore/numerics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace compscore {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void require_file(const std::string& path, const std::string& what, const std::string& hint) {
  if (path.empty()) {
    throw ValidationError("no " + what + " path configured" + (hint.empty() ? "" : " (" + hint + ")"));
  }
  if (!fs::exists(path)) {
    throw ValidationError("missing " + what + ": " + path + (hint.empty() ? "" : " (" + hint + ")"));
  }
}

std::vector<std::string> read_sentences(const std::string& path) {
  std::vector<std::string> sentences;
  for (auto& line : read_lines(path)) {
    if (!split_words(line).empty()) sentences.push_back(std::move(line));
  }
  if (sentences.empty()) throw ValidationError("no sentences in " + path);
  return sentences;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void dump_json(const json& j, const std::string& path) {
  write_text_file(path, j.dump(2) + "\n");
}

std::vector<double> effective_alphas(const RunConfig& cfg) {
  return cfg.alphas.empty() ? default_alpha_grid() : cfg.alphas;
}

// predictor table pivoted wide per word event, joined to word offset times
EventSeries to_word_events(const std::vector<std::pair<int, int>>& keys,
                           const std::vector<Eigen::VectorXd>& rows,
                           const std::vector<std::string>& names, const WordTiming& timing) {
  struct Entry {
    double time;
    std::pair<int, int> key;
    const Eigen::VectorXd* values;
  };
  std::vector<Entry> entries;
  entries.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const TimingEntry* t = timing.find(keys[i].first, keys[i].second);
    if (t == nullptr) {
      throw ValidationError("timing: missing entry for sentence " + std::to_string(keys[i].first) +
                            " word " + std::to_string(keys[i].second));
    }
    entries.push_back({t->offset_s, keys[i], &rows[i]});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.key < b.key;
  });

  EventSeries events;
  events.names = names;
  events.values.resize(static_cast<Eigen::Index>(entries.size()),
                       static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    events.times.push_back(entries[i].time);
    events.values.row(static_cast<Eigen::Index>(i)) = entries[i].values->transpose();
  }
  return events;
}

struct EncodeRun {
  std::string name;
  EventSeries events;
  FitMethod method = FitMethod::ridge;
};

ModelConfig config_from_args(const InitModelArgs& a) {
  ModelConfig cfg;
  cfg.vocab_size = a.vocab_size;
  cfg.d_model = a.d_model;
  cfg.n_layers = a.n_layers;
  cfg.n_heads = a.n_heads;
  cfg.d_ff = a.d_ff;
  if (a.activation == "relu") cfg.activation = Activation::relu;
  else if (a.activation == "gelu") cfg.activation = Activation::gelu;
  else if (a.activation == "silu_glu") cfg.activation = Activation::silu_glu;
  else throw ValidationError("init-model: unknown activation '" + a.activation + "'");
  if (a.norm == "layernorm") cfg.norm = NormKind::layernorm;
  else if (a.norm == "rmsnorm") cfg.norm = NormKind::rmsnorm;
  else throw ValidationError("init-model: unknown norm '" + a.norm + "'");
  if (a.positional == "rotary") cfg.positional = Positional::rotary;
  else if (a.positional == "learned_absolute") cfg.positional = Positional::learned_absolute;
  else throw ValidationError("init-model: unknown positional scheme '" + a.positional + "'");
  cfg.rope_theta = static_cast<float>(a.rope_theta);
  cfg.max_seq_len = a.max_seq_len;
  cfg.tie_embeddings = a.tie_embeddings;
  cfg.validate();
  return cfg;
}

TestTail tail_from_string(const std::string& s) {
  if (s == "greater") return TestTail::greater;
  if (s == "less") return TestTail::less;
  if (s == "two_sided") return TestTail::two_sided;
  throw ValidationError("unknown tail '" + s + "' (greater|less|two_sided)");
}

}  // namespace

void RunConfig::validate() const {
  if (d_m_prime < 1) throw ValidationError("d_m_prime must be >= 1");
  if (coverage <= 0.0 || coverage >= 1.0) throw ValidationError("coverage must be in (0,1)");
  if (tr <= 0.0) throw ValidationError("tr must be positive");
  if (n_perms < 1) throw ValidationError("n_perms must be >= 1");
  if (min_extent < 1) throw ValidationError("min_extent must be >= 1");
  if (epsilon <= 0.0) throw ValidationError("epsilon must be > 0");
  if (pca_k < 1) throw ValidationError("pca_k must be >= 1");
  if (oversample < 1) throw ValidationError("oversample must be >= 1");
  if (report_top_n < 1) throw ValidationError("report_top_n must be >= 1");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  if (method != "ridge" && method != "ols") throw ValidationError("method must be ridge or ols");
  if (features != "scores" && features != "controls" && features != "hidden") {
    throw ValidationError("features must be scores, controls or hidden");
  }
  if (cluster_stat != "beta" && cluster_stat != "r2norm") {
    throw ValidationError("cluster_stat must be beta or r2norm");
  }
  tail_from_string(tail);
  for (double a : alphas) {
    if (a < 0.0) throw ValidationError("alphas must be nonnegative");
  }
}

RunConfig load_run_config(const std::string& json_path) {
  const json j = load_json_file(json_path);
  RunConfig cfg;
  auto str = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j.at(key).get<std::string>();
  };
  str("model_dir", cfg.model_dir);
  str("text", cfg.text);
  str("trees", cfg.trees);
  str("frequency", cfg.frequency);
  str("timing", cfg.timing);
  str("bold_dir", cfg.bold_dir);
  str("mask", cfg.mask);
  str("graph", cfg.graph);
  str("out_dir", cfg.out_dir);
  str("method", cfg.method);
  str("features", cfg.features);
  str("cluster_stat", cfg.cluster_stat);
  str("cluster_run", cfg.cluster_run);
  str("tail", cfg.tail);
  if (j.contains("d_m_prime")) cfg.d_m_prime = j.at("d_m_prime").get<int>();
  if (j.contains("coverage")) cfg.coverage = j.at("coverage").get<double>();
  if (j.contains("tr")) cfg.tr = j.at("tr").get<double>();
  if (j.contains("alphas")) cfg.alphas = j.at("alphas").get<std::vector<double>>();
  if (j.contains("n_perms")) cfg.n_perms = j.at("n_perms").get<int>();
  if (j.contains("min_extent")) cfg.min_extent = j.at("min_extent").get<int>();
  if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("pca_k")) cfg.pca_k = j.at("pca_k").get<int>();
  if (j.contains("oversample")) cfg.oversample = j.at("oversample").get<int>();
  if (j.contains("report_top_n")) cfg.report_top_n = j.at("report_top_n").get<int>();
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  if (j.contains("exact")) cfg.exact = j.at("exact").get<bool>();
  if (j.contains("link_conditions")) cfg.link_conditions = j.at("link_conditions").get<bool>();
  if (j.contains("isc_leave_one_out")) cfg.isc_leave_one_out = j.at("isc_leave_one_out").get<bool>();
  return cfg;
}

void cmd_score(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.model_dir, "model directory", "--model-dir");
  require_file(cfg.text, "text file", "--text");
  fs::create_directories(cfg.out_dir);

  const ModelBundle bundle = load_model(cfg.model_dir);
  const auto sentences = read_sentences(cfg.text);

  ScoreOptions options;
  options.exact = cfg.exact;
  options.d_m_prime = cfg.d_m_prime;
  options.threads = cfg.threads;

  std::vector<int> skipped;
  const ScoreTable table = score_text(bundle, sentences, options, &skipped);
  for (int s : skipped) {
    std::cerr << "skipping sentence " << s << ": longer than max_seq_len "
              << bundle.config().max_seq_len << " tokens\n";
  }
  const std::string out = (fs::path(cfg.out_dir) / "scores.csv").string();
  table.write_csv(out);
  std::cerr << "wrote " << out << " (" << table.rows.size() << " rows, " << skipped.size()
            << " sentences skipped)\n";
}

void cmd_calibrate(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.model_dir, "model directory", "--model-dir");
  require_file(cfg.text, "corpus text file", "--text");
  fs::create_directories(cfg.out_dir);

  const ModelBundle bundle = load_model(cfg.model_dir);
  const auto lines = read_sentences(cfg.text);

  std::vector<std::vector<std::int32_t>> chunks;
  const int cap = bundle.config().max_seq_len;
  for (const auto& line : lines) {
    const auto spans = bundle.vocab().tokenize(line);
    std::vector<std::int32_t> ids;
    for (const auto& s : spans) {
      ids.push_back(s.token_id);
      if (static_cast<int>(ids.size()) == cap) {
        chunks.push_back(std::move(ids));
        ids.clear();
      }
    }
    if (!ids.empty()) chunks.push_back(std::move(ids));
  }

  const MajorityKReport report = calibrate_majority_k(bundle, chunks, cfg.coverage);

  json j;
  j["coverage"] = report.coverage;
  j["token_count"] = report.token_count;
  j["skipped_cells"] = report.skipped_cells;
  j["per_layer_mean_k"] = report.per_layer_mean_k;
  j["overall_mean_k"] = report.overall_mean_k;
  const std::string out = (fs::path(cfg.out_dir) / "majority_k.json").string();
  dump_json(j, out);
  std::cerr << "wrote " << out << " (overall mean k = " << report.overall_mean_k << ")\n";
}

void cmd_controls(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.trees, "trees file", "--trees");
  require_file(cfg.frequency, "frequency table", "--frequency");
  require_file(cfg.timing, "timing file", "--timing");
  fs::create_directories(cfg.out_dir);

  const auto trees = parse_bracketed(read_text_file(cfg.trees));
  if (trees.empty()) throw ValidationError("no trees in " + cfg.trees);
  const auto freq = FrequencyTable::from_csv(cfg.frequency);
  const auto timing = WordTiming::from_csv(cfg.timing);

  const ControlTable table = build_control_table(trees, freq, timing);
  const std::string out = (fs::path(cfg.out_dir) / "controls.csv").string();
  table.write_csv(out);
  std::cerr << "wrote " << out << " (" << table.rows.size() << " rows)\n";
}

void cmd_encode(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.bold_dir, "BOLD directory", "--bold-dir");
  require_file(cfg.mask, "mask file", "--mask");
  require_file(cfg.timing, "timing file", "--timing");

  const auto bolds = load_bold_dir(cfg.bold_dir);
  for (const auto& b : bolds) {
    if (std::fabs(b.tr - cfg.tr) > 1e-9) {
      throw ValidationError("subject " + b.subject_id + " has TR " + format_double(b.tr) +
                            " but the config says " + format_double(cfg.tr));
    }
  }
  const auto mask = load_mask(cfg.mask, static_cast<int>(bolds[0].data.cols()));
  const auto timing = WordTiming::from_csv(cfg.timing);

  std::vector<EncodeRun> runs;
  const FitMethod score_method = cfg.method == "ols" ? FitMethod::ols : FitMethod::ridge;

  if (cfg.features == "scores") {
    const std::string scores_path = (fs::path(cfg.out_dir) / "scores.csv").string();
    require_file(scores_path, "scores table", "run `compscore score` first");
    const ScoreTable table = ScoreTable::read_csv(scores_path);
    if (table.rows.empty()) throw ValidationError("scores table is empty: " + scores_path);

    std::map<std::pair<int, int>, Eigen::VectorXd> wide;
    for (const auto& r : table.rows) {
      auto& vec = wide[{r.sentence_id, r.word_index}];
      if (vec.size() == 0) vec = Eigen::VectorXd::Zero(table.n_layers);
      vec[r.layer] = r.score;
    }
    std::vector<std::pair<int, int>> keys;
    std::vector<Eigen::VectorXd> rows;
    for (auto& [key, vec] : wide) {
      keys.push_back(key);
      rows.push_back(std::move(vec));
    }
    std::vector<std::string> names;
    for (int l = 0; l < table.n_layers; ++l) names.push_back("score_layer" + std::to_string(l));

    EncodeRun run;
    run.name = "scores";
    run.events = to_word_events(keys, rows, names, timing);
    run.method = score_method;
    runs.push_back(std::move(run));
  } else if (cfg.features == "controls") {
    const std::string controls_path = (fs::path(cfg.out_dir) / "controls.csv").string();
    require_file(controls_path, "controls table", "run `compscore controls` first");
    const ControlTable table = ControlTable::read_csv(controls_path);
    if (table.rows.empty()) throw ValidationError("controls table is empty: " + controls_path);

    const std::vector<std::string> names = {"wordrate", "log_freq", "nc_topdown", "nc_bottomup",
                                            "nc_leftcorner"};
    for (std::size_t c = 0; c < names.size(); ++c) {
      std::vector<std::pair<int, int>> keys;
      std::vector<Eigen::VectorXd> rows;
      for (const auto& r : table.rows) {
        keys.emplace_back(r.sentence_id, r.word_index);
        Eigen::VectorXd v(1);
        switch (c) {
          case 0: v[0] = r.wordrate; break;
          case 1: v[0] = r.log_freq; break;
          case 2: v[0] = r.nc_topdown; break;
          case 3: v[0] = r.nc_bottomup; break;
          default: v[0] = r.nc_leftcorner; break;
        }
        rows.push_back(std::move(v));
      }
      EncodeRun run;
      run.name = names[c];
      run.events = to_word_events(keys, rows, {names[c]}, timing);
      run.method = FitMethod::ols;  // single-regressor controls
      runs.push_back(std::move(run));
    }
  } else {  // hidden
    require_file(cfg.model_dir, "model directory", "--model-dir");
    require_file(cfg.text, "text file", "--text");
    const ModelBundle bundle = load_model(cfg.model_dir);
    const auto sentences = read_sentences(cfg.text);
    const int n_layers = bundle.config().n_layers;

    std::vector<std::pair<int, int>> keys;
    std::vector<std::vector<Eigen::VectorXf>> hidden_per_layer(
        static_cast<std::size_t>(n_layers));
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      const WordAlignment align = align_words(bundle.vocab(), sentences[s]);
      if (align.words.empty()) continue;
      if (static_cast<int>(align.spans.size()) > bundle.config().max_seq_len) {
        std::cerr << "skipping sentence " << s << ": longer than max_seq_len\n";
        continue;
      }
      std::vector<std::int32_t> ids;
      for (const auto& sp : align.spans) ids.push_back(sp.token_id);
      const LayerTrace trace = forward_with_trace(bundle, ids);
      for (std::size_t w = 0; w < align.words.size(); ++w) {
        keys.emplace_back(static_cast<int>(s), static_cast<int>(w));
        for (int l = 0; l < n_layers; ++l) {
          hidden_per_layer[static_cast<std::size_t>(l)].push_back(
              trace.hidden_states[static_cast<std::size_t>(l)]
                  .row(align.last_token_position[w])
                  .transpose());
        }
      }
    }
    if (keys.empty()) throw ValidationError("no scorable words in " + cfg.text);

    const int n_words = static_cast<int>(keys.size());
    const int k = std::min(cfg.pca_k, std::min(n_words, bundle.config().d_model));
    if (k < cfg.pca_k) {
      std::cerr << "pca_k reduced to " << k << " (limited by words/d_model)\n";
    }
    for (int l = 0; l < n_layers; ++l) {
      Eigen::MatrixXd hidden(n_words, bundle.config().d_model);
      for (int w = 0; w < n_words; ++w) {
        hidden.row(w) = hidden_per_layer[static_cast<std::size_t>(l)][static_cast<std::size_t>(w)]
                            .transpose()
                            .cast<double>();
      }
      const Eigen::MatrixXd reduced = pca_reduce(hidden, k);
      std::vector<Eigen::VectorXd> rows;
      for (int w = 0; w < n_words; ++w) rows.push_back(reduced.row(w).transpose());
      std::vector<std::string> names;
      for (int c = 0; c < k; ++c) names.push_back("pc" + std::to_string(c));

      EncodeRun run;
      run.name = "hidden_layer" + std::to_string(l);
      run.events = to_word_events(keys, rows, names, timing);
      run.method = score_method;
      runs.push_back(std::move(run));
    }
  }

  EncodingOptions options;
  options.alphas = effective_alphas(cfg);
  options.ceiling_eps = cfg.epsilon;
  options.isc_leave_one_out = cfg.isc_leave_one_out;
  options.oversample = cfg.oversample;
  options.threads = cfg.threads;

  json summary;
  summary["features"] = cfg.features;
  summary["method"] = cfg.method;
  summary["n_subjects"] = bolds.size();
  summary["n_mask_vertices"] = mask.size();
  json run_summaries;

  for (const auto& run : runs) {
    options.method = run.method;
    const auto results = run_encoding(run.events, bolds, mask, options);

    const fs::path run_dir = fs::path(cfg.out_dir) / "betas" / run.name;
    fs::create_directories(run_dir);
    for (const auto& res : results) {
      res.write_csv((run_dir / (res.subject_id + ".betas.csv")).string());
    }

    // per-vertex mean normalized score across subjects (validity is a
    // per-vertex property; every subject shares the ceiling)
    double best = 0.0, total = 0.0;
    long n_valid = 0;
    bool any = false;
    for (std::size_t m = 0; m < mask.size(); ++m) {
      if (!results[0].fits[m].valid) continue;
      double acc = 0.0;
      for (const auto& res : results) acc += res.fits[m].r2_norm;
      const double vertex_mean = acc / static_cast<double>(results.size());
      best = any ? std::max(best, vertex_mean) : vertex_mean;
      total += vertex_mean;
      ++n_valid;
      any = true;
    }
    json rs;
    rs["n_valid_vertices"] = n_valid;
    rs["max_r2_norm"] = any ? json(best) : json(nullptr);
    rs["mean_r2_norm"] = any ? json(total / static_cast<double>(n_valid)) : json(nullptr);
    run_summaries[run.name] = rs;
    std::cerr << "encoded " << run.name << ": " << n_valid << " valid vertices\n";
  }
  summary["runs"] = run_summaries;
  dump_json(summary, (fs::path(cfg.out_dir) / "summary.json").string());
}

void cmd_cluster(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.graph, "adjacency graph", "--graph");
  const fs::path betas_dir = fs::path(cfg.out_dir) / "betas" / cfg.cluster_run;
  if (!fs::is_directory(betas_dir)) {
    throw ValidationError("missing betas directory: " + betas_dir.string() +
                          " (run `compscore encode` first)");
  }

  const AdjacencyGraph graph = AdjacencyGraph::from_file(cfg.graph);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(betas_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 10 && name.substr(name.size() - 10) == ".betas.csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) {
    throw ValidationError("cluster test needs at least 2 subjects in " + betas_dir.string());
  }

  // collect predictor names (excluding intercept) from the first file
  std::vector<std::string> predictors;
  {
    const auto rows = read_csv(files[0].string(), "vertex,predictor,beta,alpha,r2,r2_isc,r2_norm");
    std::set<std::string> seen;
    for (const auto& f : rows) {
      if (f[1] != "intercept" && seen.insert(f[1]).second) predictors.push_back(f[1]);
    }
  }

  GroupMap map;
  map.n_vertices = graph.n_vertices;
  if (cfg.cluster_stat == "beta") {
    map.n_conditions = static_cast<int>(predictors.size());
    map.condition_names = predictors;
  } else {
    map.n_conditions = 1;
    map.condition_names = {"r2_norm"};
  }
  map.values.setConstant(static_cast<Eigen::Index>(files.size()),
                         static_cast<Eigen::Index>(graph.n_vertices) * map.n_conditions,
                         std::numeric_limits<double>::quiet_NaN());

  std::map<std::string, int> cond_index;
  for (std::size_t i = 0; i < predictors.size(); ++i) {
    cond_index[predictors[i]] = static_cast<int>(i);
  }
  for (std::size_t s = 0; s < files.size(); ++s) {
    const auto rows = read_csv(files[s].string(), "vertex,predictor,beta,alpha,r2,r2_isc,r2_norm");
    for (const auto& f : rows) {
      const int vertex = static_cast<int>(parse_long(f[0]));
      if (vertex < 0 || vertex >= graph.n_vertices) {
        throw ValidationError(files[s].string() + ": vertex " + f[0] + " outside the graph (" +
                              std::to_string(graph.n_vertices) + " vertices)");
      }
      if (cfg.cluster_stat == "beta") {
        if (f[1] == "intercept") continue;
        const auto it = cond_index.find(f[1]);
        if (it == cond_index.end()) {
          throw ValidationError(files[s].string() + ": unexpected predictor '" + f[1] + "'");
        }
        map.values(static_cast<Eigen::Index>(s), map.cell(vertex, it->second)) = parse_double(f[2]);
      } else {
        if (f[1] != "intercept") continue;  // one row per vertex is enough
        const double r2n = f[6] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                         : parse_double(f[6]);
        map.values(static_cast<Eigen::Index>(s), map.cell(vertex, 0)) = r2n;
      }
    }
  }

  ClusterParams params;
  params.threshold_t = student_t_critical(static_cast<int>(files.size()) - 1, 0.05);
  params.min_extent = cfg.min_extent;
  params.link_conditions = cfg.link_conditions;
  params.tail = tail_from_string(cfg.tail);

  const ClusterResult result = permutation_test(map, graph, cfg.n_perms,
                                                sub_seed(cfg.seed, "permutation"), params,
                                                cfg.threads);

  json j;
  j["stat"] = cfg.cluster_stat;
  j["run"] = cfg.cluster_run;
  j["n_subjects"] = files.size();
  j["n_vertices"] = graph.n_vertices;
  j["n_conditions"] = map.n_conditions;
  j["condition_names"] = map.condition_names;
  j["threshold_t"] = params.threshold_t;
  j["tail"] = cfg.tail;
  j["min_extent"] = params.min_extent;
  j["link_conditions"] = params.link_conditions;
  j["n_perms"] = cfg.n_perms;
  j["seed"] = cfg.seed;
  json clusters = json::array();
  for (const auto& cl : result.clusters) {
    json c;
    c["p_value"] = cl.p_value;
    c["mass"] = cl.mass;
    c["extent"] = cl.extent;
    json cells = json::array();
    for (int cell : cl.cells) {
      cells.push_back(json::array({cell / map.n_conditions, cell % map.n_conditions}));
    }
    c["cells"] = cells;
    clusters.push_back(c);
  }
  j["clusters"] = clusters;
  {
    double mx = 0.0;
    for (double v : result.null_max) mx = std::max(mx, v);
    json null_summary;
    null_summary["max"] = mx;
    null_summary["mean"] = mean_of(result.null_max);
    j["null_summary"] = null_summary;
  }
  fs::create_directories(cfg.out_dir);
  dump_json(j, (fs::path(cfg.out_dir) / "clusters.json").string());

  std::string null_csv = "max_mass\n";
  for (double v : result.null_max) {
    null_csv += format_double(v);
    null_csv += '\n';
  }
  write_text_file((fs::path(cfg.out_dir) / "null_dist.csv").string(), null_csv);
  std::cerr << "wrote clusters.json (" << result.clusters.size() << " clusters)\n";
}

void cmd_report(const RunConfig& cfg) {
  cfg.validate();
  const std::string scores_path = (fs::path(cfg.out_dir) / "scores.csv").string();
  require_file(scores_path, "scores table", "run `compscore score` first");
  require_file(cfg.text, "text file", "--text");

  ScoreTable table = ScoreTable::read_csv(scores_path);
  if (table.rows.empty()) throw ValidationError("scores table is empty: " + scores_path);
  const auto sentences = read_sentences(cfg.text);

  // rebuild prefixes from the text (prefixes are not serialized in the CSV)
  std::vector<std::vector<WordSpan>> words_per_sentence;
  words_per_sentence.reserve(sentences.size());
  for (const auto& s : sentences) words_per_sentence.push_back(split_words(s));
  for (auto& r : table.rows) {
    if (r.sentence_id < 0 || r.sentence_id >= static_cast<int>(sentences.size())) {
      throw ValidationError("scores.csv refers to sentence " + std::to_string(r.sentence_id) +
                            " but " + cfg.text + " has " + std::to_string(sentences.size()));
    }
    const auto& words = words_per_sentence[static_cast<std::size_t>(r.sentence_id)];
    if (r.word_index < 0 || r.word_index >= static_cast<int>(words.size())) {
      throw ValidationError("scores.csv word index " + std::to_string(r.word_index) +
                            " out of range in sentence " + std::to_string(r.sentence_id));
    }
    r.prefix = sentences[static_cast<std::size_t>(r.sentence_id)].substr(
        0, static_cast<std::size_t>(words[static_cast<std::size_t>(r.word_index)].end));
  }

  const fs::path plot_dir = fs::path(cfg.out_dir) / "plotdata";
  fs::create_directories(plot_dir);

  // layer means
  std::vector<double> layer_mean(static_cast<std::size_t>(table.n_layers), 0.0);
  std::vector<long> layer_n(static_cast<std::size_t>(table.n_layers), 0);
  for (const auto& r : table.rows) {
    layer_mean[static_cast<std::size_t>(r.layer)] += r.score;
    layer_n[static_cast<std::size_t>(r.layer)] += 1;
  }
  {
    std::string csv = "layer,mean_score\n";
    for (int l = 0; l < table.n_layers; ++l) {
      layer_mean[static_cast<std::size_t>(l)] /= static_cast<double>(layer_n[static_cast<std::size_t>(l)]);
      csv += std::to_string(l);
      csv += ',';
      csv += format_double(layer_mean[static_cast<std::size_t>(l)]);
      csv += '\n';
    }
    write_text_file((plot_dir / "layer_mean_scores.csv").string(), csv);
  }

  // layerwise correlation matrix, long format
  {
    const Eigen::MatrixXd corr = layerwise_correlation(table);
    std::string csv = "layer_a,layer_b,pearson_r\n";
    for (int a = 0; a < table.n_layers; ++a) {
      for (int b = 0; b < table.n_layers; ++b) {
        csv += std::to_string(a);
        csv += ',';
        csv += std::to_string(b);
        csv += ',';
        csv += format_double(corr(a, b));
        csv += '\n';
      }
    }
    write_text_file((plot_dir / "layer_correlation.csv").string(), csv);
  }

  // score-vs-control simple regressions, when controls are available
  bool have_controls = false;
  const std::string controls_path = (fs::path(cfg.out_dir) / "controls.csv").string();
  if (fs::exists(controls_path)) {
    have_controls = true;
    const ControlTable controls = ControlTable::read_csv(controls_path);
    std::map<std::pair<int, int>, const ControlRow*> by_key;
    for (const auto& r : controls.rows) by_key[{r.sentence_id, r.word_index}] = &r;

    std::vector<std::vector<double>> series(static_cast<std::size_t>(table.n_layers));
    std::vector<double> log_freq, td, bu, lc;
    for (const auto& r : table.rows) {
      if (r.layer != 0) continue;
      const auto it = by_key.find({r.sentence_id, r.word_index});
      if (it == by_key.end()) {
        throw ValidationError("controls.csv has no row for sentence " +
                              std::to_string(r.sentence_id) + " word " +
                              std::to_string(r.word_index));
      }
      log_freq.push_back(it->second->log_freq);
      td.push_back(it->second->nc_topdown);
      bu.push_back(it->second->nc_bottomup);
      lc.push_back(it->second->nc_leftcorner);
    }
    for (const auto& r : table.rows) {
      series[static_cast<std::size_t>(r.layer)].push_back(r.score);
    }

    auto r2_against = [&](const std::vector<double>& control, int layer) {
      Eigen::Map<const Eigen::VectorXd> x(control.data(), static_cast<Eigen::Index>(control.size()));
      Eigen::Map<const Eigen::VectorXd> y(series[static_cast<std::size_t>(layer)].data(),
                                          static_cast<Eigen::Index>(control.size()));
      const double r = pearson(x, y);
      return std::isnan(r) ? std::numeric_limits<double>::quiet_NaN() : r * r;
    };
    std::string csv = "layer,control,r2\n";
    for (int l = 0; l < table.n_layers; ++l) {
      const std::pair<const char*, const std::vector<double>*> controls_list[] = {
          {"log_freq", &log_freq}, {"nc_topdown", &td}, {"nc_bottomup", &bu}, {"nc_leftcorner", &lc}};
      for (const auto& [name, vec] : controls_list) {
        csv += std::to_string(l);
        csv += ',';
        csv += name;
        csv += ',';
        csv += format_double(r2_against(*vec, l));
        csv += '\n';
      }
    }
    write_text_file((plot_dir / "score_vs_controls.csv").string(), csv);
  }

  // report.json with extreme prefixes per layer
  json j;
  std::set<int> sentence_ids;
  std::set<std::pair<int, int>> word_keys;
  for (const auto& r : table.rows) {
    sentence_ids.insert(r.sentence_id);
    word_keys.insert({r.sentence_id, r.word_index});
  }
  j["n_sentences"] = sentence_ids.size();
  j["n_words"] = word_keys.size();
  j["n_layers"] = table.n_layers;
  j["layer_mean_scores"] = layer_mean;
  j["score_vs_controls_available"] = have_controls;
  json ex;
  for (int l = 0; l < table.n_layers; ++l) {
    const auto [low, high] = extreme_prefixes(table, l, cfg.report_top_n);
    json low_j = json::array(), high_j = json::array();
    for (const auto& p : low) {
      low_j.push_back({{"prefix", p.prefix}, {"score", p.score}});
    }
    for (const auto& p : high) {
      high_j.push_back({{"prefix", p.prefix}, {"score", p.score}});
    }
    ex["layer" + std::to_string(l)] = {{"low", low_j}, {"high", high_j}};
  }
  j["extreme_prefixes"] = ex;
  dump_json(j, (fs::path(cfg.out_dir) / "report.json").string());
  std::cerr << "wrote report.json and plotdata/\n";
}

void cmd_init_model(const InitModelArgs& args) {
  if (args.out_dir.empty()) throw ValidationError("init-model: --out is required");
  const ModelConfig cfg = config_from_args(args);
  ModelBundle bundle =
      args.vocab_file.empty()
          ? init_random_model(cfg, sub_seed(args.seed, "model-init"))
          : init_random_model(cfg, sub_seed(args.seed, "model-init"),
                              Vocabulary::from_file(args.vocab_file));
  save_model(bundle, args.out_dir);
  std::cerr << "wrote random model to " << args.out_dir << "\n";
}

}  // namespace compscore
