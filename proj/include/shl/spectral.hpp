#pragma once

// Real-to-complex FFTs on a TorusGrid and exact Fourier-multiplier calculus.
//
// Spectra use the FFTW half-complex layout: dimensions N x ... x (N/2 + 1).
// Derivative wavenumbers vanish on the Nyquist index of each axis so that
// derivatives of real fields stay real and the discrete gradient is minus the
// adjoint of the discrete divergence.

#include <array>
#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "shl/grid.hpp"

namespace shl {

using cplx = std::complex<double>;
using Spectrum = std::vector<cplx>;

class Spectral {
 public:
  explicit Spectral(const TorusGrid& grid);

  const TorusGrid& grid() const;
  std::size_t size() const;

  void forward(std::span<const double> in, std::span<cplx> out) const;
  Spectrum forward(std::span<const double> in) const;
  /// Normalized inverse transform.
  void inverse(std::span<const cplx> in, std::span<double> out) const;
  std::vector<double> inverse(std::span<const cplx> in) const;

  /// Derivative wavenumber along `axis` (zero on that axis' Nyquist index).
  double k(int axis, std::size_t s) const;
  /// Sum of squared derivative wavenumbers; the symbol of -div grad.
  double k2(std::size_t s) const;
  /// Multiplicity of mode s in the full spectrum (1 or 2).
  double weight(std::size_t s) const;
  /// Signed integer mode numbers of spectral index s.
  std::array<int, 3> mode(std::size_t s) const;
  /// True when every |mode| is below N/3 (two-thirds dealiasing rule).
  bool inside_two_thirds(std::size_t s) const;
  /// Spectral index of signed integer modes, if representable in the half spectrum.
  std::size_t index_of(std::array<int, 3> modes) const;

  /// Lattice inner product sum_x x(x) y(x), evaluated from spectra.
  double inner(std::span<const cplx> x, std::span<const cplx> y) const;

  struct Tables;

 private:
  std::shared_ptr<const Tables> t_;
};

/// Multiply a spectrum by the symbol of d^|m| / dx_{m_1} ... dx_{m_k}.
void apply_derivative(const Spectral& sp, const MultiIndex& m, std::span<cplx> spectrum);

Field gradient(const Field& scalar);
Field divergence(const Field& vector);
/// Partial derivative of a scalar field along a multi-index.
Field derivative(const Field& scalar, const MultiIndex& m);
/// Gradient part of a vector field: grad (Laplacian)^{-1} div g.
Field gradient_part(const Field& vector);
/// Curl components d_j g_k - d_k g_j (j < k) of a vector field.
Field curl(const Field& vector);
/// Zero-mean potential u with grad u equal to the gradient part of g.
Field potential_from_gradient(const Field& vector);
/// || (-Laplacian)^{-1/2} div g ||_{L^2}: the H^{-1} norm of a divergence.
double divergence_h_minus1_norm(const Field& vector);

}  // namespace shl
