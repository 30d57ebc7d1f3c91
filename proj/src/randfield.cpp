#include "shl/randfield.hpp"

#include <algorithm>
#include <cmath>

#include "shl/error.hpp"

namespace shl {

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "gaussian" || name == "gaussian-bump") return KernelFamily::Gaussian;
  if (name == "compact-bump" || name == "bump") return KernelFamily::CompactBump;
  throw Error(Errc::Config, "unknown kernel family '" + name + "'");
}

CoefficientMap parse_coefficient_map(const std::string& name) {
  if (name == "scalar-sigmoid") return CoefficientMap::ScalarSigmoid;
  if (name == "anisotropic-sigmoid") return CoefficientMap::AnisotropicSigmoid;
  throw Error(Errc::Config, "unknown coefficient map '" + name + "'");
}

std::string to_string(KernelFamily f) { return f == KernelFamily::Gaussian ? "gaussian" : "compact-bump"; }

std::string to_string(CoefficientMap m) {
  return m == CoefficientMap::ScalarSigmoid ? "scalar-sigmoid" : "anisotropic-sigmoid";
}

namespace {

double profile(KernelFamily family, double x, double rho) {
  const double t = x / rho;
  if (family == KernelFamily::Gaussian) return std::exp(-t * t);
  if (std::abs(t) >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - t * t));
}

}  // namespace

PeriodicKernel periodize_kernel(const KernelSpec& spec, const TorusGrid& grid) {
  if (!(spec.rho > 0.0)) throw Error(Errc::InvalidArgument, "correlation length must be positive");
  if (spec.rho > grid.L / 8.0)
    throw Error(Errc::KernelTooWide, "rho = " + std::to_string(spec.rho) + " exceeds L/8 = " + std::to_string(grid.L / 8.0));
  if (spec.kappa < 1) throw Error(Errc::InvalidArgument, "kappa must be at least 1");

  const int N = grid.N;
  PeriodicKernel k;
  k.amplitude = spec.amplitude;
  k.axis.assign(static_cast<std::size_t>(N), 0.0);
  double total = 0.0;
  for (int j = 0; j < N; ++j) {
    const int o = j <= N / 2 ? j : j - N;
    k.axis[j] = profile(spec.family, o * grid.h, spec.rho);
    total += k.axis[j];
  }
  // Wrap-sum image shifts until their mass is negligible.
  for (int m = 1;; ++m) {
    double added = 0.0;
    for (int j = 0; j < N; ++j) {
      const int o = j <= N / 2 ? j : j - N;
      const double v = profile(spec.family, (o + m * N) * grid.h, spec.rho) +
                       profile(spec.family, (o - m * N) * grid.h, spec.rho);
      k.axis[j] += v;
      added += v;
    }
    total += added;
    if (added <= 1e-14 * total) break;
  }

  double norm2 = 0.0;
  for (double v : k.axis) norm2 += v * v * grid.h;
  const double scale = 1.0 / std::sqrt(norm2);
  double peak = 0.0;
  for (double& v : k.axis) {
    v *= scale;
    peak = std::max(peak, std::abs(v));
  }
  for (int j = 0; j < N; ++j) {
    const int o = j <= N / 2 ? j : j - N;
    if (std::abs(k.axis[j]) > 1e-16 * peak) k.taps.push_back(o);
  }
  std::sort(k.taps.begin(), k.taps.end());

  k.values = Field(grid, Rank::scalar());
  auto dst = k.values.component(0);
  for (std::size_t s = 0; s < grid.points(); ++s) {
    const auto c = grid.coords(s);
    double v = spec.amplitude;
    for (int a = 0; a < grid.d; ++a) v *= k.axis[c[a]];
    dst[s] = v;
  }
  return k;
}

WhiteNoise sample_white_noise(const TorusGrid& grid, int kappa, const Stream& stream) {
  if (kappa < 1) throw Error(Errc::InvalidArgument, "kappa must be at least 1");
  WhiteNoise w{Field(grid, Rank::vector(kappa)), stream.key};
  const double stddev = std::pow(grid.h, -0.5 * grid.d);
  for (int c = 0; c < kappa; ++c) fill_normal(child(stream, static_cast<std::uint64_t>(c)), w.data.component(c), stddev);
  return w;
}

namespace {

// out(x) = h * sum_t axis(o_t) in(x - o_t e_axis), taps summed in a fixed order.
void convolve_axis(const TorusGrid& grid, const PeriodicKernel& k, int axis, std::span<const double> in,
                   std::span<double> out) {
  const int N = grid.N;
  const std::size_t inner = ipow(static_cast<std::size_t>(N), grid.d - 1 - axis);
  const std::size_t outer = ipow(static_cast<std::size_t>(N), axis);
  const int lo = k.taps.front();
  const int hi = k.taps.back();
  // Extended line: ext[j + hi] = in[(j) mod N] for j in [-hi, N - lo).
  std::vector<double> ext(static_cast<std::size_t>(N + hi - lo));
  std::vector<double> w(k.taps.size());
  for (std::size_t t = 0; t < k.taps.size(); ++t) w[t] = k.axis[(k.taps[t] + N) % N] * grid.h;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * static_cast<std::size_t>(N) * inner + i;
      for (int j = -hi; j < N - lo; ++j) {
        const int jj = ((j % N) + N) % N;
        ext[static_cast<std::size_t>(j + hi)] = in[base + static_cast<std::size_t>(jj) * inner];
      }
      for (int j = 0; j < N; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < w.size(); ++t) acc += w[t] * ext[static_cast<std::size_t>(j - k.taps[t] + hi)];
        out[base + static_cast<std::size_t>(j) * inner] = acc;
      }
    }
  }
}

}  // namespace

Field sample_gaussian_field(const PeriodicKernel& kernel, const WhiteNoise& noise) {
  const TorusGrid& grid = noise.data.grid();
  if (!(kernel.values.grid() == grid)) throw Error(Errc::GridMismatch, "kernel and noise grids differ");
  const std::size_t kappa = noise.data.components();
  Field G(grid, Rank::vector(static_cast<int>(kappa)));
  std::vector<double> a(grid.points()), b(grid.points());
  for (std::size_t c = 0; c < kappa; ++c) {
    auto src = noise.data.component(c);
    std::copy(src.begin(), src.end(), a.begin());
    for (int axis = 0; axis < grid.d; ++axis) {
      convolve_axis(grid, kernel, axis, a, b);
      std::swap(a, b);
    }
    auto dst = G.component(c);
    for (std::size_t s = 0; s < a.size(); ++s) dst[s] = kernel.amplitude * a[s];
  }
  return G;
}

double sigmoid(double t) { return 0.5 * (1.0 + std::tanh(t)); }

CoefficientField coefficient_from_gaussian(const Field& G, double lambda, CoefficientMap map) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(Errc::OutOfRange, "lambda must lie in (0, 1)");
  const TorusGrid& grid = G.grid();
  const int d = grid.d;
  if (map == CoefficientMap::AnisotropicSigmoid && G.components() < static_cast<std::size_t>(d))
    throw Error(Errc::RankMismatch, "anisotropic map needs kappa >= d channels");
  CoefficientField cf{Field(grid, Rank::matrix(d)), lambda, true};
  for (int i = 0; i < d; ++i) {
    const auto g = G.component(map == CoefficientMap::ScalarSigmoid ? 0 : static_cast<std::size_t>(i));
    auto dst = cf.a.component(static_cast<std::size_t>(i * d + i));
    for (std::size_t s = 0; s < g.size(); ++s) dst[s] = lambda + (1.0 - lambda) * sigmoid(g[s]);
  }
  return cf;
}

CoefficientField constant_coefficient(const TorusGrid& grid, double c, double lambda) {
  CoefficientField cf{Field(grid, Rank::matrix(grid.d)), lambda, true};
  for (int i = 0; i < grid.d; ++i) {
    auto dst = cf.a.component(static_cast<std::size_t>(i * grid.d + i));
    std::fill(dst.begin(), dst.end(), c);
  }
  return cf;
}

std::pair<double, double> rayleigh_range(const CoefficientField& cf, const Stream& stream, int trials) {
  const int d = cf.a.grid().d;
  const std::size_t n = cf.a.points();
  double lo = INFINITY, hi = -INFINITY;
  std::vector<double> e(static_cast<std::size_t>(d) * 2);
  for (int t = 0; t < trials; ++t) {
    fill_normal(child(stream, static_cast<std::uint64_t>(t)), e, 1.0);
    double nrm = 0.0;
    for (int i = 0; i < d; ++i) nrm += e[i] * e[i];
    for (std::size_t s = 0; s < n; ++s) {
      double q = 0.0;
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) q += e[r] * cf.a.at(static_cast<std::size_t>(r * d + c), s) * e[c];
      q /= nrm;
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
  }
  return {lo, hi};
}

}  // namespace shl
