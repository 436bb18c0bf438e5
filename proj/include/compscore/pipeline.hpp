#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace compscore {

// Everything a pipeline command can consume, loadable from a JSON file and
// overridable flag by flag. Paths are validated by the command that needs
// them, not up front.
struct RunConfig {
  // inputs
  std::string model_dir;
  std::string text;       // one sentence per line
  std::string trees;      // one bracketed tree per line
  std::string frequency;  // CSV word,count
  std::string timing;     // CSV sentence_id,word_index,word,onset_s,offset_s
  std::string bold_dir;   // sub-*.bold.{json,bin}
  std::string mask;       // vertex indices
  std::string graph;      // n_vertices=N header + edge list
  std::string out_dir = "out";

  // numeric parameters
  int d_m_prime = 3000;
  double coverage = 0.5;
  double tr = 2.0;
  std::vector<double> alphas;  // empty -> default grid
  int n_perms = 10000;
  int min_extent = 20;
  double epsilon = 1e-3;
  std::uint64_t seed = 0;
  int pca_k = 100;
  int oversample = 20;
  int report_top_n = 5;
  int threads = 1;

  // mode flags
  bool exact = false;              // exact scores instead of approx(d_m_prime)
  std::string method = "ridge";    // ridge | ols (score/hidden encodings)
  bool link_conditions = true;
  bool isc_leave_one_out = false;
  std::string features = "scores";    // scores | controls | hidden
  std::string cluster_stat = "beta";  // beta | r2norm
  std::string cluster_run = "scores";  // betas/<run> directory to cluster
  std::string tail = "greater";        // greater | less | two_sided

  void validate() const;
};

RunConfig load_run_config(const std::string& json_path);

// Subcommand bodies. Each writes its artifacts under cfg.out_dir and throws
// ValidationError (exit 2) or std::runtime_error (exit 1) on failure.
void cmd_score(const RunConfig& cfg);
void cmd_calibrate(const RunConfig& cfg);
void cmd_controls(const RunConfig& cfg);
void cmd_encode(const RunConfig& cfg);
void cmd_cluster(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

// Extra utility: materializes a random model directory (init-model command).
struct InitModelArgs {
  std::string out_dir;
  std::string vocab_file;  // optional; filler vocabulary when empty
  int vocab_size = 512;
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 256;
  std::string activation = "silu_glu";
  std::string norm = "rmsnorm";
  std::string positional = "rotary";
  double rope_theta = 10000.0;
  int max_seq_len = 512;
  bool tie_embeddings = true;
  std::uint64_t seed = 0;
};

void cmd_init_model(const InitModelArgs& args);

}  // namespace compscore
