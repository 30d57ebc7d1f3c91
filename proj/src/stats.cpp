#include "shl/stats.hpp"

#include <cmath>

#include "shl/error.hpp"

namespace shl {

void Welford::add(std::span<const double> x) {
  if (mean_.empty()) {
    mean_.assign(x.size(), 0.0);
    m2_.assign(x.size(), 0.0);
  }
  if (x.size() != mean_.size()) throw Error(Errc::RankMismatch, "Welford: sample size changed");
  ++n_;
  const double inv = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = x[i] - mean_[i];
    mean_[i] += delta * inv;
    m2_[i] += delta * (x[i] - mean_[i]);
  }
}

void Welford::merge(const Welford& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  if (o.mean_.size() != mean_.size()) throw Error(Errc::RankMismatch, "Welford: merge size mismatch");
  const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
  const double n = na + nb;
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    const double delta = o.mean_[i] - mean_[i];
    mean_[i] += delta * nb / n;
    m2_[i] += o.m2_[i] + delta * delta * na * nb / n;
  }
  n_ += o.n_;
}

std::vector<double> Welford::variance() const {
  std::vector<double> v(mean_.size(), 0.0);
  if (n_ < 2) return v;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / static_cast<double>(n_ - 1);
  return v;
}

std::vector<double> Welford::standard_error() const {
  std::vector<double> v = variance();
  for (double& x : v) x = n_ > 0 ? std::sqrt(x / static_cast<double>(n_)) : 0.0;
  return v;
}

double Welford::variance0() const { return n_ < 2 ? 0.0 : m2_.at(0) / static_cast<double>(n_ - 1); }

double Welford::se0() const { return n_ == 0 ? 0.0 : std::sqrt(variance0() / static_cast<double>(n_)); }

RateFit fit_rate(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 3) throw Error(Errc::InvalidArgument, "fit_rate needs at least 3 points");
  const double n = static_cast<double>(pairs.size());
  double sx = 0, sy = 0;
  for (const auto& [x, y] : pairs) {
    if (!(y > 0.0) || !(x > 0.0)) throw Error(Errc::InvalidArgument, "fit_rate needs positive values");
    sx += std::log(x);
    sy += std::log(y);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : pairs) {
    const double dx = std::log(x) - mx, dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw Error(Errc::InvalidArgument, "fit_rate needs distinct abscissae");
  RateFit f;
  f.points = pairs.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (const auto& [x, y] : pairs) {
    const double r = std::log(y) - (f.intercept + f.slope * std::log(x));
    sse += r * r;
  }
  f.stderr_slope = std::sqrt(sse / (n - 2.0) / sxx);
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return f;
}

std::pair<double, double> mean_se(std::span<const double> v) {
  Welford w;
  for (double x : v) w.add(x);
  return {w.count() ? w.mean0() : 0.0, w.se0()};
}

}  // namespace shl
