#include "compscore/encoding.hpp"

#include "compscore/csv.hpp"
#include "compscore/numerics.hpp"
#include "compscore/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace compscore {

namespace {

using json = nlohmann::ordered_json;

constexpr double kZscoreTol = 1e-4;

// Simple regression of y on [x, 1]; returns in-sample R^2, NaN when x is
// degenerate.
double r2_on_single_regressor(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double mx = x.mean();
  const double my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  if (sxx <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double sxy = ((x.array() - mx) * (y.array() - my)).sum();
  const double syy = (y.array() - my).square().sum();
  if (syy <= 0.0) return 0.0;
  const double slope = sxy / sxx;
  const double ss_res = syy - slope * sxy;
  return 1.0 - ss_res / syy;
}

}  // namespace

BoldMatrix load_bold(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ValidationError("cannot open " + json_path.string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + json_path.string() + ": " + e.what());
  }
  for (const char* key : {"n_TRs", "n_vertices", "TR"}) {
    if (!meta.contains(key)) {
      throw ValidationError(json_path.string() + ": missing field '" + std::string(key) + "'");
    }
  }
  const auto n_trs = meta.at("n_TRs").get<long>();
  const auto n_vertices = meta.at("n_vertices").get<long>();
  const double tr = meta.at("TR").get<double>();
  if (n_trs < 2 || n_vertices < 1 || tr <= 0.0) {
    throw ValidationError(json_path.string() + ": bad n_TRs/n_vertices/TR");
  }

  std::filesystem::path bin_path = json_path;
  bin_path.replace_extension(".bin");  // sub-XX.bold.json -> sub-XX.bold.bin
  std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
  if (!bin) throw ValidationError("cannot open " + bin_path.string());
  const auto bytes = static_cast<long>(bin.tellg());
  if (bytes != n_trs * n_vertices * 4) {
    throw ValidationError(bin_path.string() + ": expected " + std::to_string(n_trs * n_vertices * 4) +
                          " bytes, found " + std::to_string(bytes));
  }
  bin.seekg(0);
  std::vector<float> raw(static_cast<std::size_t>(n_trs * n_vertices));
  bin.read(reinterpret_cast<char*>(raw.data()), bytes);
  if (!bin) throw ValidationError("failed reading " + bin_path.string());

  BoldMatrix bold;
  bold.tr = tr;
  {
    std::string stem = json_path.filename().string();
    const auto dot = stem.find(".bold.json");
    bold.subject_id = dot == std::string::npos ? stem : stem.substr(0, dot);
  }
  bold.data.resize(n_trs, n_vertices);
  for (long t = 0; t < n_trs; ++t) {
    for (long v = 0; v < n_vertices; ++v) {
      const float x = raw[static_cast<std::size_t>(t * n_vertices + v)];
      if (!std::isfinite(x)) {
        throw ValidationError(bin_path.string() + ": non-finite value at TR " + std::to_string(t) +
                              ", vertex " + std::to_string(v));
      }
      bold.data(t, v) = static_cast<double>(x);
    }
  }

  for (long v = 0; v < n_vertices; ++v) {
    const double mean = bold.data.col(v).mean();
    const double sd = std::sqrt((bold.data.col(v).array() - mean).square().sum() /
                                static_cast<double>(n_trs));
    if (std::fabs(mean) > kZscoreTol || std::fabs(sd - 1.0) > kZscoreTol) {
      throw ValidationError(bin_path.string() + ": vertex " + std::to_string(v) +
                            " is not z-scored across time (mean " + format_double(mean) + ", sd " +
                            format_double(sd) + ")");
    }
  }
  return bold;
}

void save_bold(const BoldMatrix& bold, const std::filesystem::path& json_path) {
  json meta;
  meta["n_TRs"] = bold.data.rows();
  meta["n_vertices"] = bold.data.cols();
  meta["TR"] = bold.tr;
  write_text_file(json_path.string(), meta.dump(2) + "\n");

  std::filesystem::path bin_path = json_path;
  bin_path.replace_extension(".bin");
  std::vector<float> raw;
  raw.reserve(static_cast<std::size_t>(bold.data.size()));
  for (Eigen::Index t = 0; t < bold.data.rows(); ++t) {
    for (Eigen::Index v = 0; v < bold.data.cols(); ++v) {
      raw.push_back(static_cast<float>(bold.data(t, v)));
    }
  }
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + bin_path.string());
  bin.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
}

std::vector<BoldMatrix> load_bold_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("BOLD directory does not exist: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 10 && name.substr(name.size() - 10) == ".bold.json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no *.bold.json files in " + dir.string());
  std::vector<BoldMatrix> bolds;
  bolds.reserve(files.size());
  for (const auto& f : files) bolds.push_back(load_bold(f));
  return bolds;
}

std::vector<int> load_mask(const std::filesystem::path& path, int n_vertices) {
  const std::string text = read_text_file(path.string());
  std::vector<int> mask;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    const long v = parse_long(std::string_view(text).substr(i, j - i));
    if (v < 0 || v >= n_vertices) {
      throw ValidationError("mask: vertex " + std::to_string(v) + " outside [0, " +
                            std::to_string(n_vertices) + ")");
    }
    mask.push_back(static_cast<int>(v));
    i = j;
  }
  if (mask.empty()) throw ValidationError("mask file is empty: " + path.string());
  std::set<int> unique(mask.begin(), mask.end());
  if (unique.size() != mask.size()) throw ValidationError("mask contains duplicate vertices");
  return mask;
}

Eigen::VectorXd isc_ceiling(std::span<const BoldMatrix> bolds, bool leave_one_out) {
  if (bolds.size() < 2) throw ValidationError("isc_ceiling: needs at least 2 subjects");
  const auto n_trs = bolds[0].data.rows();
  const auto n_vertices = bolds[0].data.cols();
  for (const auto& b : bolds) {
    if (b.data.rows() != n_trs || b.data.cols() != n_vertices) {
      throw ValidationError("isc_ceiling: subject " + b.subject_id + " has mismatched shape");
    }
  }
  const auto n_subj = static_cast<double>(bolds.size());

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n_trs, n_vertices);
  for (const auto& b : bolds) sum += b.data;

  Eigen::VectorXd ceiling(n_vertices);
  for (Eigen::Index v = 0; v < n_vertices; ++v) {
    double acc = 0.0;
    bool degenerate = false;
    for (const auto& b : bolds) {
      Eigen::VectorXd mean_course =
          leave_one_out ? ((sum.col(v) - b.data.col(v)) / (n_subj - 1.0)).eval()
                        : (sum.col(v) / n_subj).eval();
      const double r2 = r2_on_single_regressor(mean_course, b.data.col(v));
      if (std::isnan(r2)) {
        degenerate = true;
        break;
      }
      acc += r2;
    }
    ceiling[v] = degenerate ? std::numeric_limits<double>::quiet_NaN() : acc / n_subj;
  }
  return ceiling;
}

std::optional<double> normalize_r2(double r2, double r2_isc, double eps) {
  if (eps <= 0.0) throw ValidationError("normalize_r2: eps must be > 0");
  if (!std::isfinite(r2_isc) || r2_isc <= eps) return std::nullopt;
  return r2 / r2_isc;
}

Eigen::MatrixXd pca_reduce(const Eigen::MatrixXd& data, int k, Eigen::MatrixXd* axes_out) {
  const auto n = data.rows();
  const auto d = data.cols();
  if (k < 1 || k > std::min(n, d)) {
    throw ValidationError("pca_reduce: k must be in [1, min(n_rows, n_cols)]");
  }
  Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("pca_reduce: eigendecomposition failed");

  // eigenvalues come back ascending; take the top k in descending order
  Eigen::MatrixXd axes(d, k);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd axis = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index max_idx = 0;
    axis.cwiseAbs().maxCoeff(&max_idx);
    if (axis[max_idx] < 0.0) axis = -axis;
    axes.col(c) = axis;
  }
  if (axes_out != nullptr) *axes_out = axes;
  return centered * axes;
}

void EncodingResult::write_csv(const std::string& path) const {
  std::string out = "vertex,predictor,beta,alpha,r2,r2_isc,r2_norm\n";
  for (const auto& fit : fits) {
    for (std::size_t p = 0; p < predictor_names.size(); ++p) {
      out += std::to_string(fit.vertex);
      out += ',';
      out += predictor_names[p];
      out += ',';
      out += format_double(fit.beta[static_cast<Eigen::Index>(p)]);
      out += ',';
      out += format_double(fit.alpha);
      out += ',';
      out += format_double(fit.r2);
      out += ',';
      out += format_double(fit.r2_isc);
      out += ',';
      out += fit.valid ? format_double(fit.r2_norm) : "nan";
      out += '\n';
    }
  }
  write_text_file(path, out);
}

std::vector<EncodingResult> run_encoding(const EventSeries& events,
                                         std::span<const BoldMatrix> bolds,
                                         std::span<const int> mask,
                                         const EncodingOptions& options) {
  if (bolds.empty()) throw ValidationError("run_encoding: no subjects");
  if (mask.empty()) throw ValidationError("run_encoding: empty mask");
  const double tr = bolds[0].tr;
  for (const auto& b : bolds) {
    if (std::fabs(b.tr - tr) > 1e-9) {
      throw ValidationError("run_encoding: subject " + b.subject_id + " has TR " +
                            format_double(b.tr) + ", expected " + format_double(tr));
    }
  }
  const auto n_trs = bolds[0].data.rows();
  const double duration = static_cast<double>(n_trs) * tr;
  if (!events.times.empty()) {
    const double last = events.times.back();
    if (last > duration) {
      throw ValidationError("run_encoding: last event at " + format_double(last) +
                            " s exceeds the scan duration " + format_double(duration) + " s");
    }
  }

  const DesignMatrix design = convolve_to_design(events, tr, duration, options.oversample, options.hrf);
  if (design.X.rows() != n_trs) {
    throw ValidationError("run_encoding: design has " + std::to_string(design.X.rows()) +
                          " TRs but BOLD has " + std::to_string(n_trs));
  }

  const Eigen::VectorXd ceiling = isc_ceiling(bolds, options.isc_leave_one_out);

  std::vector<EncodingResult> results(bolds.size());
  for (std::size_t s = 0; s < bolds.size(); ++s) {
    results[s].subject_id = bolds[s].subject_id;
    results[s].predictor_names = design.names;
    results[s].fits.resize(mask.size());
  }

  // flat (subject, vertex) work list
  const std::size_t per_subject = mask.size();
  parallel_for(bolds.size() * per_subject, options.threads, [&](std::size_t idx) {
    const std::size_t s = idx / per_subject;
    const std::size_t m = idx % per_subject;
    const int vertex = mask[m];
    const Eigen::VectorXd y = bolds[s].data.col(vertex);
    FitResult fit = options.method == FitMethod::ols
                        ? fit_ols(design.X, y)
                        : fit_ridge(design.X, y, options.alphas);
    VertexFit& out = results[s].fits[m];
    out.vertex = vertex;
    out.beta = std::move(fit.beta);
    out.alpha = fit.alpha;
    out.r2 = fit.r2;
    out.r2_isc = ceiling[vertex];
    const auto normalized = normalize_r2(out.r2, out.r2_isc, options.ceiling_eps);
    out.valid = normalized.has_value();
    out.r2_norm = normalized.value_or(std::numeric_limits<double>::quiet_NaN());
  });

  return results;
}

}  // namespace compscore
