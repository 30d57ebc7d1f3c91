#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace shl {

/// Streaming mean and variance (Welford), scalar or element-wise over a vector.
class Welford {
 public:
  Welford() = default;
  explicit Welford(std::size_t size) : mean_(size, 0.0), m2_(size, 0.0) {}

  void add(std::span<const double> x);
  void add(double x) { add(std::span<const double>(&x, 1)); }
  /// Chan et al. pairwise combination; merging in a fixed order keeps results deterministic.
  void merge(const Welford& other);

  std::size_t count() const { return n_; }
  std::size_t size() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  /// Unbiased sample variance per element (0 for fewer than two samples).
  std::vector<double> variance() const;
  /// Standard error of the mean per element.
  std::vector<double> standard_error() const;

  double mean0() const { return mean_.at(0); }
  double variance0() const;
  double se0() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

struct RateFit {
  double slope = 0;
  double intercept = 0;
  double stderr_slope = 0;
  double r2 = 0;
  std::size_t points = 0;
};

/// Least squares of log(value) against log(x). Needs >= 3 pairs with positive values.
RateFit fit_rate(std::span<const std::pair<double, double>> pairs);

/// Mean and standard error of a sample.
std::pair<double, double> mean_se(std::span<const double> v);

}  // namespace shl
