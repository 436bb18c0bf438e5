#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace compscore {

// SPM-convention double-gamma impulse response: Gamma(6,1) peak minus
// Gamma(16,1)/6 undershoot, zero outside [0, support_s].
struct HrfParams {
  double peak_shape = 6.0;
  double undershoot_shape = 16.0;
  double rate = 1.0;
  double undershoot_ratio = 1.0 / 6.0;
  double support_s = 32.0;
};

double hrf(double t, const HrfParams& params = {});

// Word-aligned predictor impulses: one event per word at its offset time.
struct EventSeries {
  std::vector<double> times;  // nondecreasing, seconds
  Eigen::MatrixXd values;     // [n_events, n_predictors]
  std::vector<std::string> names;
};

// Design matrix sampled at TR multiples. Non-intercept columns are z-scored
// (population sd) after convolution; the intercept is the last column.
struct DesignMatrix {
  Eigen::MatrixXd X;  // [n_TRs, n_predictors + 1]
  double tr = 0.0;
  std::vector<std::string> names;  // includes "intercept" last
};

// Places impulses on a 1/oversample-second grid, convolves with the sampled
// HRF and samples at TR multiples; no z-scoring. Events beyond duration_s
// are validation errors.
Eigen::MatrixXd convolve_impulses(const EventSeries& events, double tr, double duration_s,
                                  int oversample = 20, const HrfParams& params = {});

// convolve_impulses plus per-column z-scoring and the intercept column.
// Zero-variance columns are validation errors.
DesignMatrix convolve_to_design(const EventSeries& events, double tr, double duration_s,
                                int oversample = 20, const HrfParams& params = {});

}  // namespace compscore
