#include "compscore/regression.hpp"

#include "compscore/csv.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace compscore {

namespace {

constexpr double kSingularTol = 1e-10;

void check_shapes(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw ValidationError("regression: X/y row mismatch");
  if (X.rows() <= X.cols()) {
    throw ValidationError("regression: need more observations (" + std::to_string(X.rows()) +
                          ") than predictors (" + std::to_string(X.cols()) + ")");
  }
}

void check_intercept_last(const Eigen::MatrixXd& X) {
  const auto last = X.cols() - 1;
  if ((X.col(last).array() != 1.0).any()) {
    throw ValidationError("ridge: last design column must be the all-ones intercept");
  }
}

struct CenteredDesign {
  Eigen::MatrixXd Xc;        // penalized columns, centered
  Eigen::VectorXd col_mean;  // means of penalized columns
  Eigen::VectorXd yc;
  double y_mean = 0.0;
};

CenteredDesign center(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  CenteredDesign c;
  const auto p = X.cols() - 1;  // exclude intercept
  c.Xc = X.leftCols(p);
  c.col_mean = c.Xc.colwise().mean();
  c.Xc.rowwise() -= c.col_mean.transpose();
  c.y_mean = y.mean();
  c.yc = y.array() - c.y_mean;
  return c;
}

Eigen::VectorXd assemble_beta(const Eigen::VectorXd& beta_pen, const CenteredDesign& c) {
  Eigen::VectorXd beta(beta_pen.size() + 1);
  beta.head(beta_pen.size()) = beta_pen;
  beta[beta_pen.size()] = c.y_mean - c.col_mean.dot(beta_pen);
  return beta;
}

}  // namespace

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int e = -3; e <= 6; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

double r_squared(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd resid = y - X * beta;
  const double ss_res = resid.squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (ss_tot <= 0.0) return 0.0;
  return 1.0 - ss_res / ss_tot;
}

FitResult fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  check_shapes(X, y);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(kSingularTol);
  if (qr.rank() < X.cols()) {
    const auto perm = qr.colsPermutation().indices();
    std::string cols;
    for (Eigen::Index i = qr.rank(); i < X.cols(); ++i) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(perm[i]);
    }
    throw ValidationError("ols: design is rank deficient (dependent columns: " + cols + ")");
  }
  FitResult fit;
  fit.beta = qr.solve(y);
  fit.alpha = 0.0;
  fit.r2 = r_squared(X, y, fit.beta);
  return fit;
}

Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha) {
  check_intercept_last(X);
  const CenteredDesign c = center(X, y);
  Eigen::MatrixXd gram = c.Xc.transpose() * c.Xc;
  gram.diagonal().array() += alpha;
  Eigen::VectorXd beta_pen = gram.ldlt().solve(c.Xc.transpose() * c.yc);
  return assemble_beta(beta_pen, c);
}

FitResult fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    std::span<const double> alphas) {
  check_shapes(X, y);
  check_intercept_last(X);
  if (alphas.empty()) throw ValidationError("ridge: empty alpha grid");

  const CenteredDesign c = center(X, y);
  const auto n = static_cast<double>(X.rows());

  Eigen::BDCSVD<Eigen::MatrixXd> svd(c.Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const Eigen::VectorXd uy = svd.matrixU().transpose() * c.yc;
  const double total_ss = c.yc.squaredNorm();
  const double residual_outside = total_ss - uy.squaredNorm();  // part of y outside col(X)

  double best_alpha = alphas[0];
  double best_gcv = std::numeric_limits<double>::infinity();
  for (double alpha : alphas) {
    if (alpha < 0.0) throw ValidationError("ridge: negative alpha");
    double rss = residual_outside;
    double df = 1.0;  // intercept
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double s2 = s[i] * s[i];
      const double shrink = s[i] > kSingularTol ? s2 / (s2 + alpha) : 0.0;
      rss += (1.0 - shrink) * (1.0 - shrink) * uy[i] * uy[i];
      df += shrink;
    }
    const double denom = n - df;
    const double gcv = denom > 0.0 ? n * rss / (denom * denom)
                                   : std::numeric_limits<double>::infinity();
    if (gcv < best_gcv) {
      best_gcv = gcv;
      best_alpha = alpha;
    }
  }

  // final coefficients at the selected alpha, from the same SVD
  Eigen::VectorXd scaled(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double s2 = s[i] * s[i];
    scaled[i] = s[i] > kSingularTol ? s[i] / (s2 + best_alpha) * uy[i] : 0.0;
  }
  Eigen::VectorXd beta_pen = svd.matrixV() * scaled;

  FitResult fit;
  fit.beta = assemble_beta(beta_pen, c);
  fit.alpha = best_alpha;
  fit.r2 = r_squared(X, y, fit.beta);
  return fit;
}

FitResult fit_ridge_kfold(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          std::span<const double> alphas, int k_folds) {
  check_shapes(X, y);
  check_intercept_last(X);
  if (alphas.empty()) throw ValidationError("ridge: empty alpha grid");
  const auto n = X.rows();
  if (k_folds < 2 || k_folds > n) throw ValidationError("ridge: bad fold count");

  double best_alpha = alphas[0];
  double best_err = std::numeric_limits<double>::infinity();
  for (double alpha : alphas) {
    double err = 0.0;
    for (int f = 0; f < k_folds; ++f) {
      const auto lo = n * f / k_folds;
      const auto hi = n * (f + 1) / k_folds;
      const auto n_val = hi - lo;
      const auto n_train = n - n_val;
      Eigen::MatrixXd Xtr(n_train, X.cols());
      Eigen::VectorXd ytr(n_train);
      Xtr.topRows(lo) = X.topRows(lo);
      ytr.head(lo) = y.head(lo);
      Xtr.bottomRows(n - hi) = X.bottomRows(n - hi);
      ytr.tail(n - hi) = y.tail(n - hi);
      const Eigen::VectorXd beta = ridge_solve(Xtr, ytr, alpha);
      err += (y.segment(lo, n_val) - X.middleRows(lo, n_val) * beta).squaredNorm();
    }
    if (err < best_err) {
      best_err = err;
      best_alpha = alpha;
    }
  }

  FitResult fit;
  fit.beta = ridge_solve(X, y, best_alpha);
  fit.alpha = best_alpha;
  fit.r2 = r_squared(X, y, fit.beta);
  return fit;
}

}  // namespace compscore
