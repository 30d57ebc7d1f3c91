#pragma once

// Stationary Gaussian fields G_L = C_{0,L} * xi on the torus and the
// coefficient maps a = a_0(G).

#include <cstdint>
#include <string>
#include <vector>

#include "shl/grid.hpp"
#include "shl/rng.hpp"

namespace shl {

enum class KernelFamily { Gaussian, CompactBump };
enum class CoefficientMap { ScalarSigmoid, AnisotropicSigmoid };

KernelFamily parse_kernel_family(const std::string& name);
CoefficientMap parse_coefficient_map(const std::string& name);
std::string to_string(KernelFamily f);
std::string to_string(CoefficientMap m);

struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double rho = 1.0;
  int kappa = 1;
  /// Marginal standard deviation of each channel of G.
  double amplitude = 1.0;
};

/// Tensor-product kernel C_0(x) = amplitude * prod_a k(x_a), k normalized so
/// that sum_j k(jh)^2 h = 1. Both the full lattice field and the periodized
/// 1D factor are kept; the factor drives the separable convolution.
struct PeriodicKernel {
  Field values;
  std::vector<double> axis;  // periodized 1D factor at offsets 0..N-1
  std::vector<int> taps;     // offsets (in -N/2..N/2) where the factor is non-negligible
  double amplitude = 1.0;
};

PeriodicKernel periodize_kernel(const KernelSpec& spec, const TorusGrid& grid);

struct WhiteNoise {
  Field data;  // kappa scalar channels, N(0, h^{-d}) per cell
  std::uint64_t stream_key = 0;
};

WhiteNoise sample_white_noise(const TorusGrid& grid, int kappa, const Stream& stream);

/// G = h^d sum_y C_{0,L}(x - y) xi(y), computed axis by axis in real space.
/// A lattice shift of the noise shifts the output exactly.
Field sample_gaussian_field(const PeriodicKernel& kernel, const WhiteNoise& noise);

struct CoefficientField {
  Field a;  // matrix field, row-major (r, c)
  double lambda = 0.5;
  bool symmetric = true;
};

/// s(t) = (1 + tanh t) / 2.
double sigmoid(double t);

CoefficientField coefficient_from_gaussian(const Field& G, double lambda, CoefficientMap map);

/// a = c Id.
CoefficientField constant_coefficient(const TorusGrid& grid, double c, double lambda);

/// Minimum and maximum of e.a(x)e / |e|^2 over lattice sites and `trials` random unit e.
std::pair<double, double> rayleigh_range(const CoefficientField& a, const Stream& stream, int trials);

}  // namespace shl
