#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "compscore/composition.hpp"
#include "compscore/controls.hpp"
#include "compscore/csv.hpp"
#include "compscore/encoding.hpp"
#include "compscore/hrf.hpp"
#include "compscore/model.hpp"
#include "compscore/numerics.hpp"
#include "compscore/pipeline.hpp"
#include "test_util.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

using namespace compscore;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(COMPSCORE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

struct Fixture {
  fs::path dir;
  RunConfig cfg;
};

// Small but complete dataset: model, text, trees, frequencies, timings,
// BOLD, mask and graph, all mutually consistent.
Fixture make_fixture(const std::string& name) {
  Fixture f;
  f.dir = testutil::fresh_dir(name);

  InitModelArgs margs;
  margs.out_dir = (f.dir / "model").string();
  margs.vocab_size = 280;
  margs.d_model = 16;
  margs.n_layers = 2;
  margs.n_heads = 2;
  margs.d_ff = 12;
  margs.max_seq_len = 64;
  margs.seed = 5;
  cmd_init_model(margs);

  write_text_file((f.dir / "text.txt").string(),
                  "the dog barked\nthe cat slept now\ndogs bark\n");
  write_text_file((f.dir / "trees.trees").string(),
                  "(S (NP the dog) (VP barked))\n"
                  "(S (NP the cat) (VP slept (ADV now)))\n"
                  "(S (NP dogs) (VP bark))\n");
  write_text_file((f.dir / "freq.csv").string(),
                  "word,count\nthe,100\ndog,10\ncat,10\nbarked,2\nslept,3\nnow,20\ndogs,4\nbark,5\n");
  write_text_file((f.dir / "timing.csv").string(),
                  "sentence_id,word_index,word,onset_s,offset_s\n"
                  "0,0,the,0.5,0.8\n0,1,dog,0.9,1.4\n0,2,barked,1.5,2.2\n"
                  "1,0,the,3.0,3.3\n1,1,cat,3.4,3.9\n1,2,slept,4.0,4.6\n1,3,now,4.7,5.1\n"
                  "2,0,dogs,6.0,6.5\n2,1,bark,6.6,7.2\n");

  // 3 subjects of z-scored noise, 8 vertices, 20 TRs at TR=2
  GaussianStream g(77);
  for (int s = 1; s <= 3; ++s) {
    Eigen::MatrixXd data(20, 8);
    for (int r = 0; r < 20; ++r) {
      for (int c = 0; c < 8; ++c) data(r, c) = g.next();
    }
    BoldMatrix bold;
    bold.data = data;
    for (Eigen::Index v = 0; v < 8; ++v) {
      Eigen::VectorXd col = bold.data.col(v);
      zscore_column(col);
      bold.data.col(v) = col;
    }
    bold.tr = 2.0;
    bold.subject_id = "sub-0" + std::to_string(s);
    fs::create_directories(f.dir / "bold");
    save_bold(bold, f.dir / "bold" / ("sub-0" + std::to_string(s) + ".bold.json"));
  }
  write_text_file((f.dir / "mask.txt").string(), "0 1 2 3 4 5 6 7\n");
  AdjacencyGraph::grid(2, 4).write_file(f.dir / "graph.txt");

  f.cfg.model_dir = (f.dir / "model").string();
  f.cfg.text = (f.dir / "text.txt").string();
  f.cfg.trees = (f.dir / "trees.trees").string();
  f.cfg.frequency = (f.dir / "freq.csv").string();
  f.cfg.timing = (f.dir / "timing.csv").string();
  f.cfg.bold_dir = (f.dir / "bold").string();
  f.cfg.mask = (f.dir / "mask.txt").string();
  f.cfg.graph = (f.dir / "graph.txt").string();
  f.cfg.out_dir = (f.dir / "out").string();
  f.cfg.d_m_prime = 6;
  f.cfg.n_perms = 60;
  f.cfg.min_extent = 1;
  f.cfg.seed = 9;
  f.cfg.threads = 1;
  f.cfg.pca_k = 3;
  return f;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

}  // namespace

TEST_CASE("score command writes a deterministic table") {
  auto f = make_fixture("pipe_score");
  cmd_score(f.cfg);
  const fs::path csv = fs::path(f.cfg.out_dir) / "scores.csv";
  REQUIRE(fs::exists(csv));
  const auto table = ScoreTable::read_csv(csv.string());
  CHECK(table.rows.size() == 9 * 2);  // 9 words, 2 layers
  for (const auto& r : table.rows) CHECK(r.n_neurons == 6);

  const std::string first = slurp(csv);
  f.cfg.threads = 3;
  cmd_score(f.cfg);
  CHECK(slurp(csv) == first);  // byte identical across thread counts
}

TEST_CASE("single-neuron approximation scores everything 1") {
  auto f = make_fixture("pipe_score_one");
  f.cfg.d_m_prime = 1;
  cmd_score(f.cfg);
  const auto table = ScoreTable::read_csv((fs::path(f.cfg.out_dir) / "scores.csv").string());
  for (const auto& r : table.rows) {
    CHECK(r.score == 1.0);
    CHECK(r.n_neurons == 1);
  }
}

TEST_CASE("calibrate command reports per-layer and overall k") {
  auto f = make_fixture("pipe_calibrate");
  cmd_calibrate(f.cfg);
  std::ifstream in(fs::path(f.cfg.out_dir) / "majority_k.json");
  REQUIRE(in.good());
  json j;
  in >> j;
  CHECK(j.at("coverage").get<double>() == 0.5);
  CHECK(j.at("per_layer_mean_k").size() == 2);
  const double base = j.at("overall_mean_k").get<double>();
  CHECK(base >= 1.0);

  f.cfg.coverage = 0.99;
  cmd_calibrate(f.cfg);
  std::ifstream in2(fs::path(f.cfg.out_dir) / "majority_k.json");
  json j2;
  in2 >> j2;
  CHECK(j2.at("overall_mean_k").get<double>() > base);
}

TEST_CASE("empty corpus is a usage error") {
  auto f = make_fixture("pipe_calibrate_empty");
  write_text_file(f.cfg.text, "\n\n");
  CHECK_THROWS_AS(cmd_calibrate(f.cfg), ValidationError);
}

TEST_CASE("controls command emits the joined table") {
  auto f = make_fixture("pipe_controls");
  cmd_controls(f.cfg);
  const auto table = ControlTable::read_csv((fs::path(f.cfg.out_dir) / "controls.csv").string());
  REQUIRE(table.rows.size() == 9);
  int td = 0;
  for (const auto& r : table.rows) td += r.nc_topdown;
  CHECK(td == 3 + 4 + 3);  // nonterminal counts of the three trees
}

TEST_CASE("encode command produces betas and a summary") {
  auto f = make_fixture("pipe_encode");
  cmd_score(f.cfg);
  cmd_controls(f.cfg);

  SUBCASE("score features with ridge") {
    cmd_encode(f.cfg);
    for (int s = 1; s <= 3; ++s) {
      CHECK(fs::exists(fs::path(f.cfg.out_dir) / "betas" / "scores" /
                       ("sub-0" + std::to_string(s) + ".betas.csv")));
    }
    std::ifstream in(fs::path(f.cfg.out_dir) / "summary.json");
    json j;
    in >> j;
    const auto& run = j.at("runs").at("scores");
    if (!run.at("max_r2_norm").is_null()) {
      const double mx = run.at("max_r2_norm").get<double>();
      const double mean = run.at("mean_r2_norm").get<double>();
      CHECK(mx >= mean);
      CHECK(mean >= 0.0);
    }
  }

  SUBCASE("control features run one OLS per variable") {
    f.cfg.features = "controls";
    cmd_encode(f.cfg);
    for (const char* name : {"wordrate", "log_freq", "nc_topdown", "nc_bottomup", "nc_leftcorner"}) {
      CHECK(fs::exists(fs::path(f.cfg.out_dir) / "betas" / name / "sub-01.betas.csv"));
    }
  }

  SUBCASE("hidden features run one ridge per layer") {
    f.cfg.features = "hidden";
    cmd_encode(f.cfg);
    CHECK(fs::exists(fs::path(f.cfg.out_dir) / "betas" / "hidden_layer0" / "sub-01.betas.csv"));
    CHECK(fs::exists(fs::path(f.cfg.out_dir) / "betas" / "hidden_layer1" / "sub-01.betas.csv"));
  }

  SUBCASE("TR mismatch is a validation error") {
    f.cfg.tr = 1.5;
    CHECK_THROWS_AS(cmd_encode(f.cfg), ValidationError);
  }
}

TEST_CASE("identical noiseless subjects normalize to exactly 1") {
  auto f = make_fixture("pipe_encode_identical");
  cmd_score(f.cfg);

  // rebuild BOLD as z(design * beta), identical across subjects
  const auto table = ScoreTable::read_csv((fs::path(f.cfg.out_dir) / "scores.csv").string());
  const auto timing = WordTiming::from_csv(f.cfg.timing);
  std::map<std::pair<int, int>, Eigen::VectorXd> wide;
  for (const auto& r : table.rows) {
    auto& v = wide[{r.sentence_id, r.word_index}];
    if (v.size() == 0) v = Eigen::VectorXd::Zero(table.n_layers);
    v[r.layer] = r.score;
  }
  EventSeries events;
  events.names = {"score_layer0", "score_layer1"};
  std::vector<std::pair<double, Eigen::VectorXd>> sorted;
  for (const auto& [key, v] : wide) {
    sorted.emplace_back(timing.find(key.first, key.second)->offset_s, v);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  events.values.resize(static_cast<Eigen::Index>(sorted.size()), 2);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    events.times.push_back(sorted[i].first);
    events.values.row(static_cast<Eigen::Index>(i)) = sorted[i].second.transpose();
  }
  const auto design = convolve_to_design(events, 2.0, 40.0);

  GaussianStream g(3);
  Eigen::MatrixXd data(20, 8);
  for (int v = 0; v < 8; ++v) {
    Eigen::VectorXd beta(3);
    beta << 1.0 + 0.2 * v, -0.5, 0.0;
    data.col(v) = design.X * beta;
    for (int r = 0; r < 20; ++r) data(r, v) += 0.0;  // noiseless
  }
  for (int s = 1; s <= 3; ++s) {
    BoldMatrix bold;
    bold.data = data;
    for (Eigen::Index v = 0; v < 8; ++v) {
      Eigen::VectorXd col = bold.data.col(v);
      REQUIRE(zscore_column(col));
      bold.data.col(v) = col;
    }
    bold.tr = 2.0;
    bold.subject_id = "sub-0" + std::to_string(s);
    save_bold(bold, fs::path(f.cfg.bold_dir) / ("sub-0" + std::to_string(s) + ".bold.json"));
  }

  cmd_encode(f.cfg);
  const auto rows = read_csv(
      (fs::path(f.cfg.out_dir) / "betas" / "scores" / "sub-01.betas.csv").string(),
      "vertex,predictor,beta,alpha,r2,r2_isc,r2_norm");
  REQUIRE(!rows.empty());
  for (const auto& r : rows) {
    CHECK(parse_double(r[5]) == doctest::Approx(1.0).epsilon(1e-9));   // ceiling
    CHECK(parse_double(r[6]) == doctest::Approx(1.0).epsilon(1e-6));   // normalized
  }
}

TEST_CASE("cluster command is reproducible across thread counts") {
  auto f = make_fixture("pipe_cluster");
  cmd_score(f.cfg);
  cmd_encode(f.cfg);
  cmd_cluster(f.cfg);
  const fs::path cj = fs::path(f.cfg.out_dir) / "clusters.json";
  const fs::path nd = fs::path(f.cfg.out_dir) / "null_dist.csv";
  REQUIRE(fs::exists(cj));
  REQUIRE(fs::exists(nd));
  const std::string c1 = slurp(cj);
  const std::string n1 = slurp(nd);

  f.cfg.threads = 4;
  cmd_cluster(f.cfg);
  CHECK(slurp(cj) == c1);
  CHECK(slurp(nd) == n1);

  json j = json::parse(c1);
  CHECK(j.at("stat") == "beta");
  CHECK(j.at("n_perms").get<int>() == 60);
  CHECK(j.at("threshold_t").get<double>() == doctest::Approx(2.92).epsilon(1e-2));  // df=2
}

TEST_CASE("report command emits plot data and extreme prefixes") {
  auto f = make_fixture("pipe_report");
  cmd_score(f.cfg);
  cmd_controls(f.cfg);
  cmd_report(f.cfg);

  const auto mean_lines = read_lines((fs::path(f.cfg.out_dir) / "plotdata" / "layer_mean_scores.csv").string());
  CHECK(mean_lines.size() == 1 + 2);  // header + one row per layer

  const auto corr_lines = read_lines((fs::path(f.cfg.out_dir) / "plotdata" / "layer_correlation.csv").string());
  CHECK(corr_lines.size() == 1 + 4);  // 2x2 long format

  CHECK(fs::exists(fs::path(f.cfg.out_dir) / "plotdata" / "score_vs_controls.csv"));

  std::ifstream in(fs::path(f.cfg.out_dir) / "report.json");
  json j;
  in >> j;
  CHECK(j.at("n_words").get<int>() == 9);
  CHECK(j.at("n_layers").get<int>() == 2);
  const auto& ex = j.at("extreme_prefixes").at("layer0");
  CHECK(ex.at("low").size() <= 5);
  CHECK(!ex.at("low").empty());
  // prefixes were rebuilt from the text
  const std::string first_prefix = ex.at("low")[0].at("prefix").get<std::string>();
  CHECK(!first_prefix.empty());
}

TEST_CASE("report without scores names the missing file") {
  auto f = make_fixture("pipe_report_missing");
  try {
    cmd_report(f.cfg);
    FAIL("expected missing scores error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("scores") != std::string::npos);
  }
}

TEST_CASE("cli exit codes: 0 success, 2 validation, 1 internal") {
  auto f = make_fixture("pipe_cli_codes");
  const std::string base = " --trees " + f.cfg.trees + " --frequency " + f.cfg.frequency +
                           " --timing " + f.cfg.timing;

  CHECK(run_cli("controls" + base + " --out-dir " + (f.dir / "out1").string()) == 0);
  // missing input: validation error
  CHECK(run_cli("controls --trees /nonexistent.trees --frequency " + f.cfg.frequency +
                " --timing " + f.cfg.timing + " --out-dir " + (f.dir / "out2").string()) == 2);
  // out_dir under a regular file: internal filesystem error
  write_text_file((f.dir / "blocker").string(), "x");
  CHECK(run_cli("controls" + base + " --out-dir " + (f.dir / "blocker" / "out").string()) == 1);
  // bad flag usage
  CHECK(run_cli("controls --no-such-flag") == 2);
  // help is success and shows defaults
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("score --help") == 0);
}

TEST_CASE("cli help output lists the documented defaults") {
  const std::string cmd = std::string(COMPSCORE_CLI_PATH) + " score --help 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string output;
  char buf[256];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) output += buf;
  pclose(pipe);
  CHECK(output.find("--approx") != std::string::npos);
  CHECK(output.find("3000") != std::string::npos);  // documented default width
  CHECK(output.find("--seed") != std::string::npos);
  CHECK(output.find("--threads") != std::string::npos);
}

TEST_CASE("config file fields are applied and flags override them") {
  auto f = make_fixture("pipe_config");
  json cfg_json;
  cfg_json["model_dir"] = f.cfg.model_dir;
  cfg_json["text"] = f.cfg.text;
  cfg_json["out_dir"] = (f.dir / "out_cfg").string();
  cfg_json["d_m_prime"] = 1;
  write_text_file((f.dir / "run.json").string(), cfg_json.dump(2));

  CHECK(run_cli("score --config " + (f.dir / "run.json").string()) == 0);
  const auto table = ScoreTable::read_csv((f.dir / "out_cfg" / "scores.csv").string());
  for (const auto& r : table.rows) CHECK(r.n_neurons == 1);  // config value used

  CHECK(run_cli("score --config " + (f.dir / "run.json").string() + " --approx 6") == 0);
  const auto table2 = ScoreTable::read_csv((f.dir / "out_cfg" / "scores.csv").string());
  for (const auto& r : table2.rows) CHECK(r.n_neurons == 6);  // flag wins
}
