#pragma once

// Two-scale expansions F^n_eps[U] = sum_k eps^k phi^k_I(./eps) d_I U on the
// unit macro torus. The micro torus has period 1/eps and the same N, so a
// micro field and its rescaling share one data array.

#include "shl/correctors.hpp"
#include "shl/homogenized.hpp"

namespace shl {

/// The macro grid (period 1) matching a micro grid of period 1/eps. Throws
/// LatticeMisalignment unless the periods agree to rounding.
TorusGrid macro_grid_for(const TorusGrid& micro, double eps);

/// Same data, reinterpreted on another grid with equal d and N.
Field regrid(const Field& f, const TorusGrid& grid);
CoefficientField regrid(const CoefficientField& a, const TorusGrid& grid);

struct TwoScaleExpansion {
  int n = 0;
  double eps = 1.0;
  Field F;     // scalar, macro grid
  Field grad;  // grad F by the product rule
};

/// `potential` holds the Fourier coefficients of U on the macro grid.
TwoScaleExpansion two_scale_expand(const CorrectorHierarchy& h, const Spectrum& potential, const TorusGrid& macro,
                                   double eps, int n);

struct ResidualCheck {
  Field lhs;  // -a(./eps) grad(u - F)
  Field rhs;  // defect + eps^n (a phi^n - sigma^n)(./eps) grad grad^n U
  double mismatch = 0;  // ||P(lhs - rhs)|| / max(||P lhs||, ||P rhs||), P the gradient projection
};

ResidualCheck two_scale_residual(const CoefficientField& a_macro, const CorrectorHierarchy& h, const Field& u_grad,
                                 const TwoScaleExpansion& expansion, const HomogProxy& proxy, const TensorList& tensors);

/// || [grad u - grad F]_{2;r} ||_{L^2} with r = min(1, L/2).
double error_norm_strong(const Field& u_grad, const Field& expansion_grad);

/// || [mean_grad - proxy_grad]_{2;eps} ||_{L^p}.
double error_norm_mean(const Field& mean_grad, const Field& proxy_grad, double eps, double p);

}  // namespace shl
