#include "compscore/csv.hpp"
#include "compscore/model.hpp"
#include "compscore/numerics.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace compscore {

namespace {

using json = nlohmann::ordered_json;

struct TensorSpec {
  std::string name;
  std::vector<long> shape;
};

// Every tensor a config requires, in canonical (file) order.
std::vector<TensorSpec> required_tensors(const ModelConfig& cfg) {
  const long v = cfg.vocab_size, d = cfg.d_model, f = cfg.d_ff;
  std::vector<TensorSpec> specs;
  specs.push_back({"embed.weight", {v, d}});
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string p = "layer." + std::to_string(i) + ".";
    for (const char* part : {"q", "k", "v", "o"}) {
      specs.push_back({p + "attn." + part + ".weight", {d, d}});
    }
    if (cfg.gated()) specs.push_back({p + "ffn.gate.weight", {f, d}});
    specs.push_back({p + "ffn.up.weight", {f, d}});
    specs.push_back({p + "ffn.down.weight", {d, f}});
    specs.push_back({p + "norm1.weight", {d}});
    specs.push_back({p + "norm2.weight", {d}});
  }
  specs.push_back({"final_norm.weight", {d}});
  if (cfg.positional == Positional::learned_absolute) {
    specs.push_back({"pos_embed.weight", {static_cast<long>(cfg.max_seq_len), d}});
  }
  if (!cfg.tie_embeddings) specs.push_back({"lm_head.weight", {v, d}});
  return specs;
}

long numel(const std::vector<long>& shape) {
  long n = 1;
  for (long s : shape) n *= s;
  return n;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  auto get = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw ValidationError(std::string("config.json: missing field '") + key + "'");
    return j.at(key);
  };
  cfg.vocab_size = get("vocab_size").get<int>();
  cfg.d_model = get("d_model").get<int>();
  cfg.n_layers = get("n_layers").get<int>();
  cfg.n_heads = get("n_heads").get<int>();
  cfg.d_ff = get("d_ff").get<int>();
  const std::string act = get("activation").get<std::string>();
  if (act == "relu") cfg.activation = Activation::relu;
  else if (act == "gelu") cfg.activation = Activation::gelu;
  else if (act == "silu_glu") cfg.activation = Activation::silu_glu;
  else throw ValidationError("config.json: unknown activation '" + act + "'");
  const std::string norm = get("norm").get<std::string>();
  if (norm == "layernorm") cfg.norm = NormKind::layernorm;
  else if (norm == "rmsnorm") cfg.norm = NormKind::rmsnorm;
  else throw ValidationError("config.json: unknown norm '" + norm + "'");
  const std::string pos = get("positional").get<std::string>();
  if (pos == "rotary") cfg.positional = Positional::rotary;
  else if (pos == "learned_absolute") cfg.positional = Positional::learned_absolute;
  else throw ValidationError("config.json: unknown positional scheme '" + pos + "'");
  cfg.rope_theta = get("rope_theta").get<float>();
  cfg.max_seq_len = get("max_seq_len").get<int>();
  cfg.tie_embeddings = get("tie_embeddings").get<bool>();
  cfg.validate();
  return cfg;
}

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["vocab_size"] = cfg.vocab_size;
  j["d_model"] = cfg.d_model;
  j["n_layers"] = cfg.n_layers;
  j["n_heads"] = cfg.n_heads;
  j["d_ff"] = cfg.d_ff;
  j["activation"] = to_string(cfg.activation);
  j["norm"] = to_string(cfg.norm);
  j["positional"] = to_string(cfg.positional);
  j["rope_theta"] = cfg.rope_theta;
  j["max_seq_len"] = cfg.max_seq_len;
  j["tie_embeddings"] = cfg.tie_embeddings;
  return j;
}

struct ManifestEntry {
  long offset = 0;
  std::vector<long> shape;
};

// Copies a row-major [rows, cols] slab out of the blob.
Eigen::MatrixXf read_matrix(const std::vector<float>& blob, const ManifestEntry& e) {
  const long rows = e.shape[0];
  const long cols = e.shape.size() == 2 ? e.shape[1] : 1;
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> map(
      blob.data() + e.offset / 4, rows, cols);
  return map;
}

Eigen::VectorXf read_vector(const std::vector<float>& blob, const ManifestEntry& e) {
  return Eigen::Map<const Eigen::VectorXf>(blob.data() + e.offset / 4, e.shape[0]);
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

Vocabulary filler_vocabulary(int vocab_size) {
  std::vector<std::string> literals;
  literals.reserve(static_cast<std::size_t>(vocab_size - 256));
  for (int id = 256; id < vocab_size; ++id) {
    literals.push_back("<unused" + std::to_string(id) + ">");
  }
  return Vocabulary::from_tokens(std::move(literals));
}

}  // namespace

ModelBundle load_model(const std::filesystem::path& model_dir) {
  const ModelConfig cfg = config_from_json(load_json_file(model_dir / "config.json"));

  const json manifest_json = load_json_file(model_dir / "tensors.json");
  if (!manifest_json.is_array()) throw ValidationError("tensors.json: expected a JSON array");
  std::map<std::string, ManifestEntry> manifest;
  for (const auto& item : manifest_json) {
    if (!item.contains("name") || !item.contains("offset") || !item.contains("shape") ||
        !item.contains("dtype")) {
      throw ValidationError("tensors.json: entry missing name/offset/shape/dtype");
    }
    if (item.at("dtype").get<std::string>() != "f32") {
      throw ValidationError("tensors.json: tensor '" + item.at("name").get<std::string>() +
                            "' has unsupported dtype (only f32)");
    }
    ManifestEntry e;
    e.offset = item.at("offset").get<long>();
    e.shape = item.at("shape").get<std::vector<long>>();
    const std::string name = item.at("name").get<std::string>();
    if (e.offset < 0 || e.offset % 4 != 0) {
      throw ValidationError("tensors.json: tensor '" + name + "' has a bad offset");
    }
    if (!manifest.emplace(name, std::move(e)).second) {
      throw ValidationError("tensors.json: duplicate tensor '" + name + "'");
    }
  }

  // raw blob
  std::ifstream bin(model_dir / "weights.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw ValidationError("cannot open " + (model_dir / "weights.bin").string());
  const auto file_bytes = static_cast<long>(bin.tellg());
  bin.seekg(0);
  std::vector<float> blob(static_cast<std::size_t>(file_bytes / 4));
  bin.read(reinterpret_cast<char*>(blob.data()), file_bytes);
  if (!bin) throw ValidationError("failed reading weights.bin");

  // bounds + overlap checks
  std::vector<std::pair<long, long>> ranges;
  for (const auto& [name, e] : manifest) {
    const long bytes = numel(e.shape) * 4;
    if (e.offset + bytes > file_bytes) {
      throw ValidationError("tensor '" + name + "' extends past the end of weights.bin (offset " +
                            std::to_string(e.offset) + " + " + std::to_string(bytes) + " > " +
                            std::to_string(file_bytes) + ")");
    }
    ranges.emplace_back(e.offset, e.offset + bytes);
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first < ranges[i - 1].second) {
      throw ValidationError("tensors.json: overlapping tensor ranges in weights.bin");
    }
  }

  auto fetch = [&](const TensorSpec& spec) -> const ManifestEntry& {
    auto it = manifest.find(spec.name);
    if (it == manifest.end()) throw ValidationError("missing tensor '" + spec.name + "'");
    if (it->second.shape != spec.shape) {
      std::string want, got;
      for (long s : spec.shape) want += std::to_string(s) + ",";
      for (long s : it->second.shape) got += std::to_string(s) + ",";
      throw ValidationError("tensor '" + spec.name + "' shape mismatch: expected [" + want +
                            "] got [" + got + "]");
    }
    const float* p = blob.data() + it->second.offset / 4;
    const long n = numel(spec.shape);
    for (long i = 0; i < n; ++i) {
      if (!std::isfinite(p[i])) {
        throw ValidationError("tensor '" + spec.name + "' contains a non-finite value");
      }
    }
    return it->second;
  };

  const auto specs = required_tensors(cfg);
  std::map<std::string, TensorSpec> by_name;
  for (const auto& s : specs) by_name[s.name] = s;

  Eigen::MatrixXf embedding = read_matrix(blob, fetch(by_name.at("embed.weight")));
  std::vector<LayerWeights> layers(static_cast<std::size_t>(cfg.n_layers));
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string p = "layer." + std::to_string(i) + ".";
    LayerWeights& w = layers[static_cast<std::size_t>(i)];
    w.attn_q = read_matrix(blob, fetch(by_name.at(p + "attn.q.weight")));
    w.attn_k = read_matrix(blob, fetch(by_name.at(p + "attn.k.weight")));
    w.attn_v = read_matrix(blob, fetch(by_name.at(p + "attn.v.weight")));
    w.attn_o = read_matrix(blob, fetch(by_name.at(p + "attn.o.weight")));
    if (cfg.gated()) w.ffn_gate = read_matrix(blob, fetch(by_name.at(p + "ffn.gate.weight")));
    w.ffn_up = read_matrix(blob, fetch(by_name.at(p + "ffn.up.weight")));
    w.ffn_down = read_matrix(blob, fetch(by_name.at(p + "ffn.down.weight")));
    w.norm1 = read_vector(blob, fetch(by_name.at(p + "norm1.weight")));
    w.norm2 = read_vector(blob, fetch(by_name.at(p + "norm2.weight")));
  }
  Eigen::VectorXf final_norm = read_vector(blob, fetch(by_name.at("final_norm.weight")));
  Eigen::MatrixXf pos_embed;
  if (cfg.positional == Positional::learned_absolute) {
    pos_embed = read_matrix(blob, fetch(by_name.at("pos_embed.weight")));
  }
  Eigen::MatrixXf lm_head =
      cfg.tie_embeddings ? embedding : read_matrix(blob, fetch(by_name.at("lm_head.weight")));

  Vocabulary vocab = Vocabulary::from_file(model_dir / "vocab.txt");
  if (vocab.size() != cfg.vocab_size) {
    throw ValidationError("vocab.txt has " + std::to_string(vocab.size()) +
                          " tokens but config says vocab_size=" + std::to_string(cfg.vocab_size));
  }

  return ModelBundle(cfg, std::move(vocab), std::move(embedding), std::move(layers),
                     std::move(final_norm), std::move(lm_head), std::move(pos_embed));
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& model_dir) {
  const ModelConfig& cfg = bundle.config();
  std::filesystem::create_directories(model_dir);

  write_text_file((model_dir / "config.json").string(), config_to_json(cfg).dump(2) + "\n");

  auto tensor_data = [&](const std::string& name) -> Eigen::MatrixXf {
    if (name == "embed.weight") return bundle.embedding();
    if (name == "final_norm.weight") return bundle.final_norm_weight();
    if (name == "lm_head.weight") return bundle.unembedding();
    if (name == "pos_embed.weight") return bundle.position_embedding();
    // layer.{i}.<rest>
    const std::size_t dot1 = name.find('.');
    const std::size_t dot2 = name.find('.', dot1 + 1);
    const int idx = std::stoi(name.substr(dot1 + 1, dot2 - dot1 - 1));
    const std::string rest = name.substr(dot2 + 1);
    const LayerWeights& w = bundle.layer(idx);
    if (rest == "attn.q.weight") return w.attn_q;
    if (rest == "attn.k.weight") return w.attn_k;
    if (rest == "attn.v.weight") return w.attn_v;
    if (rest == "attn.o.weight") return w.attn_o;
    if (rest == "ffn.gate.weight") return w.ffn_gate;
    if (rest == "ffn.up.weight") return w.ffn_up;
    if (rest == "ffn.down.weight") return w.ffn_down;
    if (rest == "norm1.weight") return w.norm1;
    if (rest == "norm2.weight") return w.norm2;
    throw std::runtime_error("save_model: unknown tensor " + name);
  };

  const auto specs = required_tensors(cfg);
  json manifest = json::array();
  std::vector<float> blob;
  long offset = 0;
  for (const auto& spec : specs) {
    json entry;
    entry["name"] = spec.name;
    entry["offset"] = offset;
    entry["shape"] = spec.shape;
    entry["dtype"] = "f32";
    manifest.push_back(entry);

    const Eigen::MatrixXf t = tensor_data(spec.name);
    const long rows = spec.shape[0];
    const long cols = spec.shape.size() == 2 ? spec.shape[1] : 1;
    if (t.rows() != rows || t.cols() != cols) {
      throw std::runtime_error("save_model: tensor " + spec.name + " has unexpected shape");
    }
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) blob.push_back(t(r, c));
    }
    offset += rows * cols * 4;
  }
  write_text_file((model_dir / "tensors.json").string(), manifest.dump(2) + "\n");

  std::ofstream bin(model_dir / "weights.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write weights.bin");
  bin.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!bin) throw std::runtime_error("weights.bin write failed");

  bundle.vocab().write_file(model_dir / "vocab.txt");
}

ModelBundle init_random_model(const ModelConfig& config, std::uint64_t seed) {
  return init_random_model(config, seed, filler_vocabulary(config.vocab_size));
}

ModelBundle init_random_model(const ModelConfig& config, std::uint64_t seed, Vocabulary vocab) {
  config.validate();
  if (vocab.size() != config.vocab_size) {
    throw ValidationError("init_random_model: vocabulary size " + std::to_string(vocab.size()) +
                          " does not match vocab_size " + std::to_string(config.vocab_size));
  }
  GaussianStream gauss(seed);
  // Weight scale 1/sqrt(d_model) keeps FFN activations O(1) at any width.
  const float sigma = 1.0f / std::sqrt(static_cast<float>(config.d_model));

  auto gaussian_matrix = [&](long rows, long cols) {
    Eigen::MatrixXf m(rows, cols);
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) m(r, c) = sigma * gauss.next_f32();
    }
    return m;
  };

  const long v = config.vocab_size, d = config.d_model, f = config.d_ff;
  Eigen::MatrixXf embedding = gaussian_matrix(v, d);
  std::vector<LayerWeights> layers(static_cast<std::size_t>(config.n_layers));
  for (auto& w : layers) {
    w.attn_q = gaussian_matrix(d, d);
    w.attn_k = gaussian_matrix(d, d);
    w.attn_v = gaussian_matrix(d, d);
    w.attn_o = gaussian_matrix(d, d);
    if (config.gated()) w.ffn_gate = gaussian_matrix(f, d);
    w.ffn_up = gaussian_matrix(f, d);
    w.ffn_down = gaussian_matrix(d, f);
    w.norm1 = Eigen::VectorXf::Ones(d);
    w.norm2 = Eigen::VectorXf::Ones(d);
  }
  Eigen::VectorXf final_norm = Eigen::VectorXf::Ones(d);
  Eigen::MatrixXf pos_embed;
  if (config.positional == Positional::learned_absolute) {
    pos_embed = gaussian_matrix(config.max_seq_len, d);
  }
  Eigen::MatrixXf lm_head = config.tie_embeddings ? embedding : gaussian_matrix(v, d);

  return ModelBundle(config, std::move(vocab), std::move(embedding), std::move(layers),
                     std::move(final_norm), std::move(lm_head), std::move(pos_embed));
}

}  // namespace compscore
