#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace compscore {

struct FitResult {
  Eigen::VectorXd beta;  // same column order as X
  double alpha = 0.0;    // 0 for OLS
  double r2 = 0.0;       // in-sample
};

// Ordinary least squares. X must have full column rank and more rows than
// columns; rank deficiency is reported with the offending column indices.
FitResult fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Ridge regression with the penalty chosen by leave-one-out generalized
// cross-validation over the grid. The last column of X must be the all-ones
// intercept, which stays unpenalized. alpha == 0 reproduces OLS.
FitResult fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    std::span<const double> alphas);

// Brute-force k-fold cross-validation over the same grid (contiguous folds,
// deterministic); slower than GCV but fold-explicit. Used to cross-check the
// GCV selection.
FitResult fit_ridge_kfold(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          std::span<const double> alphas, int k_folds);

// Ridge solution at one fixed alpha (intercept unpenalized, last column).
Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha);

double r_squared(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);

// Default penalty grid: 10 log-spaced points from 1e-3 to 1e6.
std::vector<double> default_alpha_grid();

}  // namespace compscore
