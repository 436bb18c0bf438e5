#include "compscore/csv.hpp"
#include "compscore/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <string>
#include <vector>

namespace {

using compscore::RunConfig;

// --config is applied before flags so that explicit flags win.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

void add_common_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--config", "JSON run configuration; flags override its fields")
      ->type_name("FILE");
  cmd->add_option("--out-dir", cfg.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "run seed; labeled sub-seeds derive from it")
      ->capture_default_str();
  cmd->add_option("--threads", cfg.threads, "worker threads (results are thread-count invariant)")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composition Score toolkit: FFN key-value memory compositionality scores,"
               " psycholinguistic controls, encoding regressions and cluster statistics"};
  app.require_subcommand(1);

  RunConfig cfg;
  const std::string config_path = find_config_path(argc, argv);
  try {
    if (!config_path.empty()) cfg = compscore::load_run_config(config_path);
  } catch (const compscore::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  std::function<void()> action;

  auto* score = app.add_subcommand("score", "compute per-word, per-layer Composition Scores");
  add_common_options(score, cfg);
  score->add_option("--model-dir", cfg.model_dir, "model directory")->capture_default_str();
  score->add_option("--text", cfg.text, "sentences, one per line")->capture_default_str();
  score->add_flag("--exact", cfg.exact, "use every FFN neuron instead of the top-|activation| subset");
  score->add_option("--approx", cfg.d_m_prime,
                    "neurons kept by the activation-based approximation")
      ->capture_default_str();
  score->callback([&] { action = [&] { compscore::cmd_score(cfg); }; });

  auto* calibrate = app.add_subcommand("calibrate-k", "majority-k calibration over a corpus");
  add_common_options(calibrate, cfg);
  calibrate->add_option("--model-dir", cfg.model_dir, "model directory")->capture_default_str();
  calibrate->add_option("--text", cfg.text, "calibration corpus, one line per chunk")
      ->capture_default_str();
  calibrate->add_option("--coverage", cfg.coverage, "absolute-activation mass fraction")
      ->capture_default_str();
  calibrate->callback([&] { action = [&] { compscore::cmd_calibrate(cfg); }; });

  auto* controls = app.add_subcommand("controls", "word rate, log frequency and node counts");
  add_common_options(controls, cfg);
  controls->add_option("--trees", cfg.trees, "bracketed trees, one per line")->capture_default_str();
  controls->add_option("--frequency", cfg.frequency, "word,count CSV")->capture_default_str();
  controls->add_option("--timing", cfg.timing, "word timing CSV")->capture_default_str();
  controls->callback([&] { action = [&] { compscore::cmd_controls(cfg); }; });

  auto* encode = app.add_subcommand("encode", "HRF-convolved encoding regressions per vertex");
  add_common_options(encode, cfg);
  encode->add_option("--bold-dir", cfg.bold_dir, "directory of sub-*.bold.{json,bin}")
      ->capture_default_str();
  encode->add_option("--mask", cfg.mask, "vertex index list")->capture_default_str();
  encode->add_option("--timing", cfg.timing, "word timing CSV")->capture_default_str();
  encode->add_option("--features", cfg.features, "scores | controls | hidden")->capture_default_str();
  encode->add_option("--method", cfg.method, "ridge | ols (controls always use ols)")
      ->capture_default_str();
  encode->add_option("--tr", cfg.tr, "repetition time, seconds")->capture_default_str();
  encode->add_option("--epsilon", cfg.epsilon, "minimum usable noise ceiling")->capture_default_str();
  encode->add_option("--oversample", cfg.oversample, "HRF grid samples per second")
      ->capture_default_str();
  encode->add_option("--pca-k", cfg.pca_k, "PCA components for hidden-state features")
      ->capture_default_str();
  encode->add_flag("--isc-leave-one-out", cfg.isc_leave_one_out,
                   "exclude the predicted subject from the ISC mean");
  encode->add_option("--model-dir", cfg.model_dir, "model directory (hidden features)")
      ->capture_default_str();
  encode->add_option("--text", cfg.text, "sentences (hidden features)")->capture_default_str();
  encode->add_option("--alphas", cfg.alphas, "ridge penalty grid (default 1e-3..1e6, 10 points)");
  encode->callback([&] { action = [&] { compscore::cmd_encode(cfg); }; });

  auto* cluster = app.add_subcommand("cluster", "group t-test + cluster permutation test");
  add_common_options(cluster, cfg);
  cluster->add_option("--graph", cfg.graph, "vertex adjacency file")->capture_default_str();
  cluster->add_option("--run", cfg.cluster_run, "betas/<run> directory to test")
      ->capture_default_str();
  cluster->add_option("--stat", cfg.cluster_stat, "beta | r2norm")->capture_default_str();
  cluster->add_option("--tail", cfg.tail, "greater | less | two_sided")->capture_default_str();
  cluster->add_option("--n-perms", cfg.n_perms, "sign-flip permutations")->capture_default_str();
  cluster->add_option("--min-extent", cfg.min_extent, "minimum cluster extent in vertices")
      ->capture_default_str();
  cluster->add_flag("!--no-link-conditions", cfg.link_conditions,
                    "do not link consecutive conditions at the same vertex");
  cluster->callback([&] { action = [&] { compscore::cmd_cluster(cfg); }; });

  auto* report = app.add_subcommand("report", "summary tables and plot-ready CSVs");
  add_common_options(report, cfg);
  report->add_option("--text", cfg.text, "sentences, one per line")->capture_default_str();
  report->add_option("--top-n", cfg.report_top_n, "prefixes per extreme list")->capture_default_str();
  report->callback([&] { action = [&] { compscore::cmd_report(cfg); }; });

  compscore::InitModelArgs init_args;
  auto* init = app.add_subcommand("init-model", "materialize a random model directory");
  init->add_option("--out", init_args.out_dir, "model directory to create")->required();
  init->add_option("--vocab", init_args.vocab_file, "vocab.txt to copy (filler tokens otherwise)");
  init->add_option("--vocab-size", init_args.vocab_size)->capture_default_str();
  init->add_option("--d-model", init_args.d_model)->capture_default_str();
  init->add_option("--n-layers", init_args.n_layers)->capture_default_str();
  init->add_option("--n-heads", init_args.n_heads)->capture_default_str();
  init->add_option("--d-ff", init_args.d_ff)->capture_default_str();
  init->add_option("--activation", init_args.activation, "relu | gelu | silu_glu")
      ->capture_default_str();
  init->add_option("--norm", init_args.norm, "layernorm | rmsnorm")->capture_default_str();
  init->add_option("--positional", init_args.positional, "rotary | learned_absolute")
      ->capture_default_str();
  init->add_option("--rope-theta", init_args.rope_theta)->capture_default_str();
  init->add_option("--max-seq-len", init_args.max_seq_len)->capture_default_str();
  init->add_option("--seed", init_args.seed)->capture_default_str();
  init->callback([&] { action = [&] { compscore::cmd_init_model(init_args); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    action();
  } catch (const compscore::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
