#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace compscore {

// Numerically stable softmax (max-subtracted). Accepts any dense vector
// expression; accumulates in double regardless of input scalar.
template <class Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& logits) {
  const Eigen::Index n = logits.size();
  Eigen::VectorXd p(n);
  const double mx = static_cast<double>(logits.maxCoeff());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - mx);
    p[i] = e;
    sum += e;
  }
  p /= sum;
  return p;
}

// Pearson correlation; NaN when either series has zero variance.
double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Fractional ranks with ties averaged (1-based).
std::vector<double> average_ranks(std::span<const double> values);

// Spearman rank correlation (Pearson on average ranks).
double spearman(std::span<const double> x, std::span<const double> y);

// Z-scores a column in place using the population standard deviation.
// Returns false (leaving the column untouched) when the variance is zero.
bool zscore_column(Eigen::Ref<Eigen::VectorXd> col);

double mean_of(std::span<const double> v);

// Regularized incomplete beta I_x(a, b), Lentz continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

// Upper-tail probability P(T > t) for Student's t with df degrees of freedom.
double student_t_sf(double t, int df);

// One-tailed critical value: the t with P(T > t) == p.
double student_t_critical(int df, double p);

// Deterministic Gaussian stream: mt19937_64 + Box-Muller. The standard
// library's normal_distribution is implementation-defined, so results would
// not be stable across toolchains; this one is bit-reproducible.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  float next_f32() { return static_cast<float>(next()); }

  double uniform01() {
    // 53-bit mantissa construction, uniform on [0, 1).
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives a labeled sub-seed so one run seed can fan out to independent
// streams (model init, permutations, ...) without correlation.
std::uint64_t sub_seed(std::uint64_t seed, std::string_view label);

}  // namespace compscore
