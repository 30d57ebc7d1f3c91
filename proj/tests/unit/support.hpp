#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <numbers>
#include <span>

#include "shl/experiments.hpp"
#include "shl/spectral.hpp"

namespace shl::test {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Scalar field from a function of the physical coordinates.
template <class F>
Field scalar_field(const TorusGrid& g, F fn) {
  Field out(g, Rank::scalar());
  for (std::size_t s = 0; s < g.points(); ++s) {
    const auto c = g.coords(s);
    out.at(0, s) = fn(c[0] * g.h, c[1] * g.h, c[2] * g.h);
  }
  return out;
}

/// A random coefficient on `g` with correlation length rho.
inline CoefficientField random_coefficient(const TorusGrid& g, double rho, std::uint64_t seed, double lambda = 0.2,
                                           int kappa = 1) {
  FieldSpec spec;
  spec.kernel.rho = rho;
  spec.kernel.kappa = kappa;
  spec.lambda = lambda;
  return sample_coefficient(spec, g, child(root_stream(seed), 0));
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("shl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Relative path -> contents for every regular file below `root`.
inline std::map<std::string, std::string> tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).generic_string()] = slurp(e.path());
  return out;
}

}  // namespace shl::test
