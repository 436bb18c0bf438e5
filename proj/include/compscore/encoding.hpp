#pragma once

#include "compscore/hrf.hpp"
#include "compscore/regression.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace compscore {

// One subject's surface time series, z-scored per vertex across time.
struct BoldMatrix {
  Eigen::MatrixXd data;  // [n_TRs, n_vertices]
  std::string subject_id;
  double tr = 0.0;
};

// Reads sub-XX.bold.json + sub-XX.bold.bin (raw little-endian f32, row-major
// [n_TRs, n_vertices]) and validates the per-vertex z-scoring to 1e-4.
BoldMatrix load_bold(const std::filesystem::path& json_path);
void save_bold(const BoldMatrix& bold, const std::filesystem::path& json_path);

// All sub-*.bold.json files in a directory, sorted by subject id.
std::vector<BoldMatrix> load_bold_dir(const std::filesystem::path& dir);

// Whitespace-separated vertex indices.
std::vector<int> load_mask(const std::filesystem::path& path, int n_vertices);

// Noise ceiling per vertex: each subject's time course regressed (OLS with
// intercept) on the cross-subject mean time course, R^2 averaged over
// subjects. leave_one_out excludes the predicted subject from the mean.
// Degenerate vertices (zero-variance mean regressor) come back as NaN.
Eigen::VectorXd isc_ceiling(std::span<const BoldMatrix> bolds, bool leave_one_out = false);

// R^2 / ceiling where the ceiling exceeds eps; nullopt otherwise.
std::optional<double> normalize_r2(double r2, double r2_isc, double eps);

// Centered PCA projection onto the top-k axes (descending eigenvalue; each
// component's largest-magnitude loading is positive). axes_out, when given,
// receives the [n_cols, k] component matrix.
Eigen::MatrixXd pca_reduce(const Eigen::MatrixXd& data, int k,
                           Eigen::MatrixXd* axes_out = nullptr);

enum class FitMethod { ridge, ols };

struct VertexFit {
  int vertex = -1;
  Eigen::VectorXd beta;
  double alpha = 0.0;
  double r2 = 0.0;
  double r2_isc = 0.0;
  double r2_norm = 0.0;
  bool valid = false;  // ceiling above eps and non-degenerate
};

struct EncodingResult {
  std::string subject_id;
  std::vector<std::string> predictor_names;  // includes intercept last
  std::vector<VertexFit> fits;               // mask order

  void write_csv(const std::string& path) const;
};

struct EncodingOptions {
  FitMethod method = FitMethod::ridge;
  std::vector<double> alphas = default_alpha_grid();
  double ceiling_eps = 1e-3;
  bool isc_leave_one_out = false;
  int oversample = 20;
  int threads = 1;
  HrfParams hrf;
};

// Convolves the events into a shared design and fits every masked vertex of
// every subject, normalizing R^2 by the ISC ceiling.
std::vector<EncodingResult> run_encoding(const EventSeries& events,
                                         std::span<const BoldMatrix> bolds,
                                         std::span<const int> mask, const EncodingOptions& options);

}  // namespace compscore
