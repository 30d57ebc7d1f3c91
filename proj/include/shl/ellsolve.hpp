#pragma once

// Periodic divergence-form solvers in Fourier collocation.

#include <vector>

#include "shl/grid.hpp"
#include "shl/randfield.hpp"

namespace shl {

enum class Preconditioner { InverseLaplacian, None };

struct SolveOptions {
  double tol = 1e-10;  // on the preconditioned residual, relative to the right side
  int max_iters = 0;   // 0 means 10 N
  Preconditioner preconditioner = Preconditioner::InverseLaplacian;
  bool dealias = false;  // two-thirds filter on the flux a grad u
};

struct SolveReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  std::vector<double> history;  // relative residual after each iteration, starting with 1
};

struct SolveResult {
  Field u;     // zero lattice mean
  Field grad;  // exact Fourier gradient of u
  SolveReport report;
};

/// -div a grad u = div f by preconditioned CG on the potential. Requires
/// symmetric a. Throws IndefiniteOperator on non-positive curvature; a
/// non-converged solve is reported, not thrown.
SolveResult solve_divform_variable(const CoefficientField& a, const Field& f, const SolveOptions& opts = {});

/// grad u for -div abar grad u = div f, abar a constant d x d matrix
/// (ConstTensor of order 2). Throws IndefiniteSymbol unless sym(abar) > 0.
Field solve_divform_constant(const ConstTensor& abar, const Field& f);

/// Position of sigma_{jk}, j < k, in the strictly upper triangle storage.
int skew_slot(int j, int k, int d);
/// sigma_{jk} for any j, k from upper-triangle storage starting at component `offset`.
double skew_entry(const Field& sigma, std::size_t offset, int j, int k, std::size_t site);

struct FluxCorrector {
  Field sigma;                // d(d-1)/2 components, sigma_{jk} for j < k
  double divergence_ratio = 0;  // |k.q_hat| / (|k| |q_hat|) in l2 over modes
};

/// -Lap sigma_{jk} = d_j q_k - d_k q_j, zero mean. Warns when div q is not small.
FluxCorrector solve_flux_corrector(const Field& q);

}  // namespace shl
