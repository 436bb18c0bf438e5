#include "compscore/hrf.hpp"

#include "compscore/csv.hpp"
#include "compscore/numerics.hpp"

#include <cmath>

namespace compscore {

namespace {

// Gamma(shape, rate) density.
double gamma_pdf(double t, double shape, double rate) {
  if (t <= 0.0) return 0.0;
  return std::exp(shape * std::log(rate) + (shape - 1.0) * std::log(t) - rate * t -
                  std::lgamma(shape));
}

}  // namespace

double hrf(double t, const HrfParams& p) {
  if (t < 0.0 || t > p.support_s) return 0.0;
  return gamma_pdf(t, p.peak_shape, p.rate) - p.undershoot_ratio * gamma_pdf(t, p.undershoot_shape, p.rate);
}

Eigen::MatrixXd convolve_impulses(const EventSeries& events, double tr, double duration_s,
                                  int oversample, const HrfParams& params) {
  if (oversample < 1) throw ValidationError("convolve: oversample must be >= 1");
  if (tr <= 0.0 || duration_s <= 0.0) {
    throw ValidationError("convolve: TR and duration must be positive");
  }
  const auto n_events = static_cast<Eigen::Index>(events.times.size());
  if (events.values.rows() != n_events) {
    throw ValidationError("convolve: times/values row mismatch");
  }
  const auto n_pred = events.values.cols();
  if (n_pred < 1) throw ValidationError("convolve: no predictors");

  const double dt = 1.0 / static_cast<double>(oversample);
  const auto n_fine = static_cast<Eigen::Index>(std::ceil(duration_s / dt)) + 1;
  const auto n_trs = static_cast<Eigen::Index>(std::ceil(duration_s / tr));

  // sampled kernel over its support
  const auto n_kernel = static_cast<Eigen::Index>(std::floor(params.support_s / dt)) + 1;
  Eigen::VectorXd kernel(n_kernel);
  for (Eigen::Index j = 0; j < n_kernel; ++j) kernel[j] = hrf(static_cast<double>(j) * dt, params);

  Eigen::MatrixXd fine = Eigen::MatrixXd::Zero(n_fine, n_pred);
  for (Eigen::Index e = 0; e < n_events; ++e) {
    const double t = events.times[static_cast<std::size_t>(e)];
    if (t < 0.0 || t > duration_s) {
      throw ValidationError("convolve: event at " + format_double(t) +
                            " s lies outside the scan (duration " + format_double(duration_s) + " s)");
    }
    const auto idx = static_cast<Eigen::Index>(std::llround(t / dt));
    const Eigen::Index span = std::min(n_kernel, n_fine - idx);
    // scatter: impulse * kernel
    fine.block(idx, 0, span, n_pred).noalias() +=
        kernel.head(span) * events.values.row(e);
  }

  Eigen::MatrixXd sampled(n_trs, n_pred);
  for (Eigen::Index r = 0; r < n_trs; ++r) {
    const auto idx = static_cast<Eigen::Index>(std::llround(static_cast<double>(r) * tr / dt));
    sampled.row(r) = fine.row(std::min(idx, n_fine - 1));
  }
  return sampled;
}

DesignMatrix convolve_to_design(const EventSeries& events, double tr, double duration_s,
                                int oversample, const HrfParams& params) {
  const Eigen::MatrixXd sampled = convolve_impulses(events, tr, duration_s, oversample, params);
  const auto n_pred = sampled.cols();

  DesignMatrix design;
  design.tr = tr;
  design.names = events.names;
  design.names.emplace_back("intercept");
  design.X.resize(sampled.rows(), n_pred + 1);
  design.X.leftCols(n_pred) = sampled;
  design.X.col(n_pred).setOnes();

  for (Eigen::Index c = 0; c < n_pred; ++c) {
    if (!zscore_column(design.X.col(c))) {
      throw ValidationError("convolve_to_design: predictor '" + design.names[static_cast<std::size_t>(c)] +
                            "' has zero variance after convolution");
    }
  }
  return design;
}

}  // namespace compscore
