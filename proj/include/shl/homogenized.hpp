#pragma once

// Higher-order homogenized proxies and the dispersive effective operator.
// Tensors are given as abar[k - 1] = abar^k, a ConstTensor of order k + 1
// with indices (i_1, ..., i_{k-1}, r, c).

#include <vector>

#include "shl/grid.hpp"
#include "shl/spectral.hpp"

namespace shl {

using TensorList = std::vector<ConstTensor>;

/// Fully symmetrized copies: only this part enters divergence-form operators.
TensorList symmetrized(const TensorList& tensors);

struct TildeHierarchy {
  TorusGrid grid;
  std::vector<Spectrum> potential;  // Fourier coefficients of u~^k
  std::vector<Field> grad;          // grad u~^k
};

/// grad u~^1 from -div abar^1 grad u~^1 = div f and the triangular corrections
/// -div abar^1 grad u~^k = div sum_{j=2}^k abar^j grad grad^{j-1} u~^{k+1-j}.
TildeHierarchy solve_tilde_hierarchy(const TensorList& tensors, const Field& f, int n);

struct HomogProxy {
  int n = 1;
  double eps = 1.0;
  TorusGrid grid;
  std::vector<Field> grad_tilde;  // grad u~^1 .. grad u~^n
  std::vector<Spectrum> tilde_potential;
  Field grad;                     // sum_k eps^{k-1} grad u~^k
  Spectrum potential;             // sum_k eps^{k-1} u~^k
};

HomogProxy assemble_proxy(const TildeHierarchy& tilde, double eps, int n);

/// sum_{k=1}^n eps^{k-1} abar^k grad grad^{k-1} w, from the components of grad w.
Field apply_effective_operator(const TensorList& tensors, const Field& grad_w, double eps, int n);

/// abar^k grad grad^{k-1} w for a single order k.
Field apply_tensor_term(const ConstTensor& abar_k, const Field& grad_w);

/// sum_{k=2}^n sum_{l=n+2-k}^n eps^{k+l-2} abar^k grad grad^{k-1} u~^l.
Field proxy_defect(const HomogProxy& proxy, const TensorList& tensors);

/// || div (Abar grad U + f - defect) ||_{H^-1} / || f ||: zero when the
/// proxy identity holds.
double proxy_identity_mismatch(const HomogProxy& proxy, const TensorList& tensors, const Field& f);

}  // namespace shl
